#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hsicnn/data.hpp"
#include "json.hpp"

namespace hsicnn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t bytes_per_sample(EnviDataType t) {
  switch (t) {
    case EnviDataType::Int16:
    case EnviDataType::UInt16:
      return 2;
    case EnviDataType::Float32:
      return 4;
    case EnviDataType::Float64:
      return 8;
  }
  return 0;
}

std::size_t parse_count(const EnviHeader& h, const std::string& key) {
  auto it = h.fields.find(key);
  if (it == h.fields.end()) throw ParseError("ENVI header: missing required key '" + key + "'");
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(it->second, &pos);
    if (pos != it->second.size() || v < 0) throw std::invalid_argument(key);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ParseError("ENVI header: key '" + key + "' is not a non-negative integer: '" +
                     it->second + "'");
  }
}

// Raw file position of sample (b, y, x) for the given layout.
std::size_t raw_index(Interleave il, std::size_t B, std::size_t H, std::size_t W, std::size_t b,
                      std::size_t y, std::size_t x) {
  switch (il) {
    case Interleave::BSQ:
      return (b * H + y) * W + x;
    case Interleave::BIL:
      return (y * B + b) * W + x;
    case Interleave::BIP:
      return (y * W + x) * B + b;
  }
  return 0;
}

template <typename U>
U load_scalar(const std::uint8_t* p, ByteOrder order) {
  using Bits = std::conditional_t<sizeof(U) == 2, std::uint16_t,
                                  std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>>;
  Bits bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const std::size_t shift = order == ByteOrder::Little ? i : sizeof(U) - 1 - i;
    bits |= static_cast<Bits>(static_cast<Bits>(p[i]) << (8 * shift));
  }
  return std::bit_cast<U>(bits);
}

template <typename U>
void store_scalar(U v, std::uint8_t* p, ByteOrder order) {
  using Bits = std::conditional_t<sizeof(U) == 2, std::uint16_t,
                                  std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>>;
  const Bits bits = std::bit_cast<Bits>(v);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    const std::size_t shift = order == ByteOrder::Little ? i : sizeof(U) - 1 - i;
    p[i] = static_cast<std::uint8_t>(bits >> (8 * shift));
  }
}

double decode(const std::uint8_t* p, EnviDataType t, ByteOrder o) {
  switch (t) {
    case EnviDataType::Int16:
      return load_scalar<std::int16_t>(p, o);
    case EnviDataType::UInt16:
      return load_scalar<std::uint16_t>(p, o);
    case EnviDataType::Float32:
      return load_scalar<float>(p, o);
    case EnviDataType::Float64:
      return load_scalar<double>(p, o);
  }
  return 0;
}

void encode(double v, std::uint8_t* p, EnviDataType t, ByteOrder o) {
  switch (t) {
    case EnviDataType::Int16:
      store_scalar(static_cast<std::int16_t>(std::lround(v)), p, o);
      break;
    case EnviDataType::UInt16:
      store_scalar(static_cast<std::uint16_t>(std::lround(v)), p, o);
      break;
    case EnviDataType::Float32:
      store_scalar(static_cast<float>(v), p, o);
      break;
    case EnviDataType::Float64:
      store_scalar(v, p, o);
      break;
  }
}

const char* interleave_name(Interleave il) {
  switch (il) {
    case Interleave::BSQ:
      return "bsq";
    case Interleave::BIL:
      return "bil";
    case Interleave::BIP:
      return "bip";
  }
  return "bsq";
}

// Decodes a raw raster into band-major doubles after validating its size.
std::vector<double> read_raster(const EnviHeader& h, const std::filesystem::path& data_path) {
  std::ifstream in(data_path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + data_path.string() + "'");
  std::vector<std::uint8_t> raw((std::istreambuf_iterator<char>(in)), {});
  const std::size_t bps = bytes_per_sample(h.data_type);
  const std::size_t n = h.bands * h.lines * h.samples;
  const std::size_t expected = h.header_offset + n * bps;
  if (raw.size() != expected) {
    throw ParseError("ENVI data '" + data_path.string() + "' has " + std::to_string(raw.size()) +
                         " bytes, header declares " + std::to_string(expected),
                     std::min(raw.size(), expected));
  }
  std::vector<double> out(n);
  const std::uint8_t* base = raw.data() + h.header_offset;
  for (std::size_t b = 0; b < h.bands; ++b)
    for (std::size_t y = 0; y < h.lines; ++y)
      for (std::size_t x = 0; x < h.samples; ++x) {
        const std::size_t ri = raw_index(h.interleave, h.bands, h.lines, h.samples, b, y, x);
        out[(b * h.lines + y) * h.samples + x] = decode(base + ri * bps, h.data_type, h.byte_order);
      }
  return out;
}

void write_raster(const std::vector<double>& band_major, std::size_t B, std::size_t H, std::size_t W,
                  const std::vector<double>& wavelengths, const std::filesystem::path& header_path,
                  const std::filesystem::path& data_path, const EnviWriteOptions& opt) {
  const std::size_t bps = bytes_per_sample(opt.data_type);
  std::vector<std::uint8_t> raw(B * H * W * bps);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const std::size_t ri = raw_index(opt.interleave, B, H, W, b, y, x);
        encode(band_major[(b * H + y) * W + x], raw.data() + ri * bps, opt.data_type, opt.byte_order);
      }
  std::ofstream data(data_path, std::ios::binary | std::ios::trunc);
  if (!data) throw DataError("cannot open '" + data_path.string() + "' for writing");
  data.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));

  std::ofstream hdr(header_path, std::ios::trunc);
  if (!hdr) throw DataError("cannot open '" + header_path.string() + "' for writing");
  hdr << "ENVI\n"
      << "samples = " << W << "\n"
      << "lines = " << H << "\n"
      << "bands = " << B << "\n"
      << "header offset = 0\n"
      << "file type = ENVI Standard\n"
      << "data type = " << static_cast<int>(opt.data_type) << "\n"
      << "interleave = " << interleave_name(opt.interleave) << "\n"
      << "byte order = " << static_cast<int>(opt.byte_order) << "\n";
  if (!wavelengths.empty()) {
    hdr << "wavelength = {";
    hdr.precision(17);
    for (std::size_t i = 0; i < wavelengths.size(); ++i) hdr << (i ? ", " : "") << wavelengths[i];
    hdr << "}\n";
  }
}

EnviHeader read_header(const std::filesystem::path& p) { return parse_envi_header(read_text(p)); }

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

EnviHeader parse_envi_header(const std::string& text) {
  EnviHeader h;
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    const std::size_t line_start = pos;
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = trim(text.substr(pos, eol - pos));
    pos = eol + 1;
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line == "ENVI") continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("ENVI header: expected 'key = value', got '" + line + "'", line_start);
    }
    std::string key = lower(trim(line.substr(0, eq)));
    std::string value = trim(line.substr(eq + 1));
    if (!value.empty() && value.front() == '{') {
      // Brace lists may continue over several lines.
      while (value.find('}') == std::string::npos) {
        if (pos >= text.size()) {
          throw ParseError("ENVI header: unterminated '{' for key '" + key + "'", line_start);
        }
        eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        value += " " + trim(text.substr(pos, eol - pos));
        pos = eol + 1;
      }
      value = trim(value.substr(1, value.rfind('}') - 1));
    }
    h.fields[key] = value;
  }

  h.samples = parse_count(h, "samples");
  h.lines = parse_count(h, "lines");
  h.bands = parse_count(h, "bands");
  if (h.fields.count("header offset")) h.header_offset = parse_count(h, "header offset");

  const int dt = static_cast<int>(parse_count(h, "data type"));
  switch (dt) {
    case 2:
    case 4:
    case 5:
    case 12:
      h.data_type = static_cast<EnviDataType>(dt);
      break;
    default:
      throw ParseError("ENVI header: unsupported data type " + std::to_string(dt) +
                       " (key 'data type'; supported: 2, 4, 5, 12)");
  }

  auto il = h.fields.find("interleave");
  if (il == h.fields.end()) throw ParseError("ENVI header: missing required key 'interleave'");
  const std::string ilv = lower(il->second);
  if (ilv == "bsq") {
    h.interleave = Interleave::BSQ;
  } else if (ilv == "bil") {
    h.interleave = Interleave::BIL;
  } else if (ilv == "bip") {
    h.interleave = Interleave::BIP;
  } else {
    throw ParseError("ENVI header: unknown interleave '" + il->second + "'");
  }

  if (h.fields.count("byte order")) {
    const std::size_t bo = parse_count(h, "byte order");
    if (bo > 1) throw ParseError("ENVI header: byte order must be 0 or 1");
    h.byte_order = static_cast<ByteOrder>(bo);
  }

  if (auto w = h.fields.find("wavelength"); w != h.fields.end()) {
    std::string list = w->second;
    std::replace(list.begin(), list.end(), ',', ' ');
    std::istringstream ss(list);
    double v;
    while (ss >> v) h.wavelengths.push_back(v);
  }
  return h;
}

HyperCube load_envi(const std::filesystem::path& header_path, const std::filesystem::path& data_path) {
  const EnviHeader h = read_header(header_path);
  const std::vector<double> values = read_raster(h, data_path);
  HyperCube cube(h.bands, h.lines, h.samples);
  std::transform(values.begin(), values.end(), cube.data.begin(),
                 [](double v) { return static_cast<float>(v); });
  cube.wavelengths = h.wavelengths;
  return cube;
}

void write_envi(const HyperCube& cube, const std::filesystem::path& header_path,
                const std::filesystem::path& data_path, const EnviWriteOptions& opt) {
  const std::vector<double> values(cube.data.begin(), cube.data.end());
  write_raster(values, cube.bands, cube.height, cube.width, cube.wavelengths, header_path, data_path,
               opt);
}

LabelRaster load_label_envi(const std::filesystem::path& header_path,
                            const std::filesystem::path& data_path) {
  const EnviHeader h = read_header(header_path);
  if (h.bands != 1) {
    throw ParseError("label raster must have exactly one band, header declares " +
                     std::to_string(h.bands));
  }
  const std::vector<double> values = read_raster(h, data_path);
  LabelRaster lr{h.lines, h.samples, std::vector<int>(values.size())};
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (v < 0 || v != std::floor(v)) {
      throw DataError("label raster value " + std::to_string(v) + " at pixel " + std::to_string(i) +
                      " is not a non-negative integer");
    }
    lr.labels[i] = static_cast<int>(v);
  }
  return lr;
}

LabelRaster load_label_text(const std::filesystem::path& path) {
  const std::string text = read_text(path);
  LabelRaster lr;
  std::istringstream lines(text);
  std::string line;
  std::size_t row = 0;
  while (std::getline(lines, line)) {
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    std::vector<int> values;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t p = 0;
        const int v = std::stoi(tok, &p);
        if (p != tok.size() || v < 0) throw std::invalid_argument(tok);
        values.push_back(v);
      } catch (const std::exception&) {
        throw ParseError("label grid '" + path.string() + "' row " + std::to_string(row) +
                         ": bad label '" + tok + "'");
      }
    }
    if (row == 0) {
      lr.width = values.size();
    } else if (values.size() != lr.width) {
      throw ParseError("label grid '" + path.string() + "' row " + std::to_string(row) + " has " +
                       std::to_string(values.size()) + " columns, expected " +
                       std::to_string(lr.width));
    }
    lr.labels.insert(lr.labels.end(), values.begin(), values.end());
    ++row;
  }
  lr.height = row;
  return lr;
}

void write_label_text(const LabelRaster& labels, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  for (std::size_t y = 0; y < labels.height; ++y) {
    for (std::size_t x = 0; x < labels.width; ++x) out << (x ? " " : "") << labels.at(y, x);
    out << "\n";
  }
}

void write_label_envi(const LabelRaster& labels, const std::filesystem::path& header_path,
                      const std::filesystem::path& data_path) {
  const std::vector<double> values(labels.labels.begin(), labels.labels.end());
  EnviWriteOptions opt;
  opt.data_type = EnviDataType::UInt16;
  write_raster(values, 1, labels.height, labels.width, {}, header_path, data_path, opt);
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest '" + path.string() + "': " + e.what());
  }
  for (const char* key : {"name", "header", "data", "labels", "classes"}) {
    if (!j.contains(key)) {
      throw ConfigError("manifest '" + path.string() + "': missing key '" + key + "'");
    }
  }
  const std::filesystem::path base = path.parent_path();
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.sensor = j.value("sensor", std::string("?"));
    m.header = resolve(base, j.at("header").get<std::string>());
    m.data = resolve(base, j.at("data").get<std::string>());
    m.labels = resolve(base, j.at("labels").get<std::string>());
    if (j.contains("labels_data")) m.labels_data = resolve(base, j.at("labels_data").get<std::string>());
    m.classes = j.at("classes").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest '" + path.string() + "': " + e.what());
  }
  return m;
}

void write_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  nlohmann::json j{{"name", m.name},
                   {"sensor", m.sensor},
                   {"header", m.header.string()},
                   {"data", m.data.string()},
                   {"labels", m.labels.string()},
                   {"classes", m.classes}};
  if (!m.labels_data.empty()) j["labels_data"] = m.labels_data.string();
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << "\n";
}

DomainDataset load_dataset(const DatasetManifest& m) {
  DomainDataset ds;
  ds.name = m.name;
  ds.sensor = m.sensor;
  ds.classes = m.classes;
  ds.cube = load_envi(m.header, m.data);
  if (m.labels.extension() == ".hdr") {
    std::filesystem::path data = m.labels_data;
    if (data.empty()) data = std::filesystem::path(m.labels).replace_extension("");
    ds.labels = load_label_envi(m.labels, data);
  } else {
    ds.labels = load_label_text(m.labels);
  }
  ds.validate();
  return ds;
}

}  // namespace hsicnn
