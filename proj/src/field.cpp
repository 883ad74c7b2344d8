#include "rdtf/field.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

namespace rdtf {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

std::string_view kind_name(FieldKind kind) noexcept {
  switch (kind) {
    case FieldKind::Scalar: return "scalar";
    case FieldKind::Vector: return "vector";
    case FieldKind::Sym2: return "sym2";
    case FieldKind::Sym3: return "sym3";
  }
  return "unknown";
}

ScalarField frobenius(const Sym2Field& f) {
  const Lattice& l = f.lattice();
  const int n = l.dim();
  ScalarField out(l);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const double w = i == j ? 1.0 : 2.0;
      const double* p = f.comp(sym_index(n, i, j));
      for (std::size_t k = 0; k < l.node_count(); ++k) out(k) += w * p[k] * p[k];
    }
  for (double& v : out.data()) v = std::sqrt(v);
  return out;
}

double sup_norm(const Sym2Field& f) { return frobenius(f).max_abs(); }

namespace {

constexpr char kMagic[4] = {'R', 'D', 'T', 'F'};

template <class T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw FormatError("truncated checkpoint header in " + path.string());
  return v;
}

}  // namespace

void write_checkpoint_raw(const std::filesystem::path& path, const CheckpointHeader& h,
                          const std::vector<double>& data, int comps) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kCheckpointVersion);
  put<double>(os, h.dim);
  put<double>(os, h.resolution);
  put<double>(os, h.extent);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(h.kind));
  put<double>(os, h.time);
  // Payload is node-major with components fastest.
  const std::size_t nodes = data.size() / comps;
  std::vector<double> row(comps);
  for (std::size_t i = 0; i < nodes; ++i) {
    for (int c = 0; c < comps; ++c) row[c] = data[c * nodes + i];
    os.write(reinterpret_cast<const char*>(row.data()), sizeof(double) * comps);
  }
  if (!os) throw Error("write failed for " + path.string());
}

CheckpointHeader read_checkpoint_raw(const std::filesystem::path& path,
                                     std::vector<double>& data) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad checkpoint magic in " + path.string());
  const auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointVersion)
    throw FormatError(fmt::format("unsupported checkpoint version {} in {}", version,
                                  path.string()));
  CheckpointHeader h;
  h.dim = static_cast<int>(get<double>(is, path));
  h.resolution = static_cast<int>(get<double>(is, path));
  h.extent = get<double>(is, path);
  const auto tag = get<std::uint32_t>(is, path);
  if (tag < 1 || tag > 4) throw FormatError("unknown field kind tag in " + path.string());
  h.kind = static_cast<FieldKind>(tag);
  h.time = get<double>(is, path);
  if (h.dim < 2 || h.dim > kMaxDim || h.resolution < 8 || !(h.extent > 0))
    throw FormatError("invalid lattice in checkpoint " + path.string());

  std::size_t nodes = 1;
  for (int a = 0; a < h.dim; ++a) nodes *= h.resolution;
  const int comps = component_count(h.kind, h.dim);
  std::vector<double> raw(nodes * comps);
  if (!is.read(reinterpret_cast<char*>(raw.data()), sizeof(double) * raw.size()))
    throw FormatError("truncated checkpoint payload in " + path.string());
  data.assign(raw.size(), 0.0);
  for (std::size_t i = 0; i < nodes; ++i)
    for (int c = 0; c < comps; ++c) data[c * nodes + i] = raw[i * comps + c];
  return h;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

struct CsvWriter::Impl {
  std::ofstream os;
};

CsvWriter::CsvWriter(const std::filesystem::path& path) : impl_(new Impl) {
  impl_->os.open(path, std::ios::binary);
  if (!impl_->os) {
    delete impl_;
    throw Error("cannot open " + path.string() + " for writing");
  }
}

CsvWriter::~CsvWriter() { delete impl_; }

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) impl_->os << ',';
    impl_->os << csv_escape(fields[i]);
  }
  impl_->os << "\r\n";
}

void CsvWriter::row(const std::vector<double>& values) {
  std::vector<std::string> f;
  f.reserve(values.size());
  for (double v : values) f.push_back(format_double(v));
  row(f);
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cur;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(cur));
      cur.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !cur.empty()) {
        row.push_back(std::move(cur));
        rows.push_back(std::move(row));
      }
      row.clear();
      cur.clear();
      any = false;
    } else {
      cur += c;
      any = true;
    }
  }
  if (quoted) throw FormatError("unterminated quoted CSV field");
  if (any || !cur.empty()) {
    row.push_back(std::move(cur));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace rdtf
