// Model file, one record per line:
//   HPCA1 k d n center
//   hash seed_h seed_xi        (or `identity` for the identity projector)
//   k singular values
//   d mean values              (only when center = 1)
//   d lines of k loadings
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "hpca/errors.hpp"
#include "hpca/hpca.hpp"
#include "hpca/text_format.hpp"

namespace hpca {

namespace {

constexpr std::string_view kMagic = "HPCA1";

void write_values(std::ostream& out, std::span<const double> values) {
  std::string line;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) line.push_back(' ');
    append_double(line, values[i]);
  }
  line.push_back('\n');
  out << line;
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::vector<std::string_view> fields(const char* what) {
    if (!std::getline(in_, line_)) throw FormatError("model file truncated: missing " + std::string(what));
    ++number_;
    return split_fields(line_);
  }

  std::vector<double> values(const char* what, std::size_t expected) {
    const auto parts = fields(what);
    if (parts.size() != expected) {
      throw FormatError("model line " + std::to_string(number_) + " (" + what + "): expected " +
                        std::to_string(expected) + " values, found " + std::to_string(parts.size()));
    }
    std::vector<double> out;
    out.reserve(expected);
    for (const auto part : parts) {
      const auto v = parse_double(part);
      if (!v || !std::isfinite(*v)) {
        throw FormatError("model line " + std::to_string(number_) + ": bad number '" + std::string(part) + "'");
      }
      out.push_back(*v);
    }
    return out;
  }

  bool at_end() {
    std::string rest;
    while (std::getline(in_, rest))
      if (!split_fields(rest).empty()) return false;
    return true;
  }

 private:
  std::istream& in_;
  std::string line_;
  std::size_t number_ = 0;
};

std::uint64_t header_integer(std::string_view text, const char* name) {
  const auto v = parse_uint64(text);
  if (!v) throw FormatError(std::string("model header: bad ") + name + " '" + std::string(text) + "'");
  return *v;
}

}  // namespace

void save_model(const PcaModel& model, std::ostream& out) {
  out << kMagic << ' ' << model.k() << ' ' << model.d() << ' ' << model.n_fit() << ' ' << (model.centered() ? 1 : 0)
      << '\n';
  if (model.projector().is_identity()) {
    out << "identity\n";
  } else {
    out << "hash " << model.projector().spec().seed_h << ' ' << model.projector().spec().seed_xi << '\n';
  }
  write_values(out, model.singular_values());
  if (model.centered()) write_values(out, *model.hashed_mean());
  for (std::size_t r = 0; r < model.d(); ++r) write_values(out, model.loadings().row(r));
}

void save_model(const PcaModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  save_model(model, out);
  if (!out) throw DataError("write failed for " + path.string());
}

PcaModel load_model(std::istream& in) {
  LineReader reader(in);
  const auto header = reader.fields("header");
  if (header.empty() || header[0] != kMagic) {
    throw FormatError("unsupported model version '" + std::string(header.empty() ? "" : header[0]) + "'");
  }
  if (header.size() != 5) throw FormatError("model header must be `HPCA1 k d n center`");
  const std::size_t k = header_integer(header[1], "k");
  const std::size_t d = header_integer(header[2], "d");
  const std::size_t n = header_integer(header[3], "n");
  const std::uint64_t center = header_integer(header[4], "center");
  if (k == 0 || d == 0 || center > 1) throw FormatError("model header has out-of-range values");

  const auto hash_line = reader.fields("hash line");
  std::optional<Projector> projector;
  if (hash_line.size() == 3 && hash_line[0] == "hash") {
    projector = Projector::hashed(HashSpec{d, header_integer(hash_line[1], "seed_h"), header_integer(hash_line[2], "seed_xi")});
  } else if (hash_line.size() == 1 && hash_line[0] == "identity") {
    projector = Projector::identity(d);
  } else {
    throw FormatError("model hash line must be `hash seed_h seed_xi`");
  }

  std::vector<double> sigma = reader.values("singular values", k);
  std::optional<std::vector<double>> mean;
  if (center == 1) mean = reader.values("hashed mean", d);
  DenseMatrix loadings(d, k);
  for (std::size_t r = 0; r < d; ++r) {
    const auto row = reader.values("loadings", k);
    std::copy(row.begin(), row.end(), loadings.row(r).begin());
  }
  if (!reader.at_end()) throw FormatError("model file has trailing data after the loadings");
  try {
    return PcaModel(std::move(loadings), std::move(sigma), std::move(mean), *projector, n);
  } catch (const DataError& e) {
    throw FormatError(std::string("inconsistent model: ") + e.what());
  }
}

PcaModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model " + path.string());
  return load_model(in);
}

}  // namespace hpca
