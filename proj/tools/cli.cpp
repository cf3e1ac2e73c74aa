#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hpca/diagnostics.hpp"
#include "hpca/errors.hpp"
#include "hpca/hpca.hpp"
#include "hpca/random.hpp"
#include "hpca/sparse_io.hpp"
#include "hpca/text_format.hpp"

namespace hpca::cli {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

// Command output, to a file when a path is given and to `fallback` otherwise.
// Every byte written is folded into an FNV-1a checksum.
class OutputTarget {
 public:
  OutputTarget(const std::string& path, std::ostream& fallback) : path_(path), fallback_(fallback) {
    if (!path_.empty()) {
      file_.open(path_, std::ios::binary | std::ios::trunc);
      if (!file_) throw DataError("cannot write " + path_);
    }
  }

  void write(std::string_view bytes) {
    stream() << bytes;
    hash_ = fnv1a64(bytes, hash_);
  }

  std::uint64_t finish() {
    stream().flush();
    if (!stream()) throw DataError("write failed for " + (path_.empty() ? std::string("stdout") : path_));
    return hash_;
  }

  bool to_file() const noexcept { return !path_.empty(); }

 private:
  std::ostream& stream() { return path_.empty() ? fallback_ : file_; }

  std::string path_;
  std::ostream& fallback_;
  std::ofstream file_;
  std::uint64_t hash_ = fnv1a64({});
};

std::uint64_t file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::uint64_t h = fnv1a64({});
  std::vector<char> buffer(1 << 16);
  while (in) {
    in.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    h = fnv1a64({buffer.data(), static_cast<std::size_t>(in.gcount())}, h);
  }
  if (in.bad()) throw StreamError(0, "read failure in " + path);
  return h;
}

std::size_t default_threads() {
  const char* env = std::getenv("HPCA_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  const auto v = parse_uint64(env);
  if (!v || *v == 0) throw ConfigError("HPCA_THREADS must be a positive integer, got '" + std::string(env) + "'");
  return static_cast<std::size_t>(*v);
}

struct Manifest {
  json doc;
  std::string path;  // --manifest; empty means print it
};

void emit_manifest(const Manifest& m, bool output_on_stdout, const Streams& io) {
  const std::string text = m.doc.dump(2) + "\n";
  if (!m.path.empty()) {
    std::ofstream f(m.path, std::ios::binary | std::ios::trunc);
    if (!f || !(f << text)) throw DataError("cannot write manifest " + m.path);
    return;
  }
  (output_on_stdout ? io.err : io.out) << text;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct FitArgs {
  std::string input;
  std::size_t k = 0;
  std::optional<std::size_t> d;
  std::optional<std::size_t> l;
  std::uint64_t seed = 0;
  bool center = false;
  bool identity = false;
  std::string output;
  std::optional<std::size_t> declared_p;
  std::optional<std::size_t> parallel;
  std::string manifest;
};

struct TransformArgs {
  std::string model;
  std::string input;
  std::string output;
  bool unwhitened = false;
  std::optional<std::size_t> d;
  std::optional<std::uint64_t> seed;
  std::string manifest;
};

struct DiagnoseArgs {
  std::string input;
  std::size_t k = 0;
  std::optional<std::size_t> d;
  std::optional<std::size_t> l;
  double epsilon = 0.5;
  double delta = 0.01;
  std::size_t seeds = 1;
  std::uint64_t seed = 0;
  bool center = false;
  bool identity = false;
  std::optional<std::size_t> declared_p;
  std::optional<std::size_t> parallel;
  std::string output;
  std::string manifest;
};

struct SynthArgs {
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t rank = 0;
  std::string spectrum;
  double noise = 0.0;
  double density = 1.0;
  std::uint64_t seed = 0;
  std::string output;
  std::string manifest;
};

// Builds the config shared by fit and diagnose. Hashed runs get their seeds
// from the master seed; identity runs need the data width first.
HpcaConfig make_config(std::size_t k, std::optional<std::size_t> d, std::optional<std::size_t> l, std::uint64_t seed,
                       bool center, bool identity, std::optional<std::size_t> p, std::size_t threads) {
  const DerivedSeeds seeds = derive_seeds(seed);
  HpcaConfig cfg;
  if (identity) {
    if (!p) throw ConfigError("--identity needs the data width");
    if (d && *d != *p) throw ConfigError("--identity uses d = p = " + std::to_string(*p) + ", got --d " + std::to_string(*d));
    cfg.projector = Projector::identity(*p);
  } else {
    if (!d) throw ConfigError("--d is required unless --identity is given");
    cfg.projector = Projector::hashed(HashSpec{*d, seeds.seed_h, seeds.seed_xi});
  }
  cfg.k = k;
  cfg.l = l.value_or(0);
  cfg.seed_omega = seeds.seed_omega;
  cfg.center = center;
  cfg.deterministic_reduce = true;
  cfg.threads = threads;
  cfg.validate();
  return cfg;
}

json projector_json(const Projector& projector) {
  if (projector.is_identity()) return json{{"kind", "identity"}, {"d", projector.dim()}};
  return json{{"kind", "hash"},
              {"d", projector.dim()},
              {"seed_h", projector.spec().seed_h},
              {"seed_xi", projector.spec().seed_xi}};
}

void add_common(std::vector<std::string>& args, const char* flag, const std::string& value) {
  args.emplace_back(flag);
  args.push_back(value);
}

int cmd_fit(const FitArgs& a, const Streams& io) {
  const auto start = Clock::now();
  const std::size_t threads = a.parallel.value_or(default_threads());
  if (!a.identity) make_config(a.k, a.d, a.l, a.seed, a.center, false, std::nullopt, threads);

  const auto ds = parse_libsvm(a.input, a.declared_p);
  const HpcaConfig cfg = make_config(a.k, a.d, a.l, a.seed, a.center, a.identity, ds.cols(), threads);
  const PcaModel model = fit(ds, cfg);

  std::ostringstream text;
  save_model(model, text);
  OutputTarget target(a.output, io.out);
  target.write(text.str());
  const std::uint64_t checksum = target.finish();

  std::vector<std::string> args{"fit"};
  add_common(args, "--input", a.input);
  add_common(args, "--k", std::to_string(cfg.k));
  add_common(args, "--l", std::to_string(cfg.probes()));
  add_common(args, "--seed", std::to_string(a.seed));
  add_common(args, "--parallel", std::to_string(threads));
  if (a.identity) {
    args.emplace_back("--identity");
  } else {
    add_common(args, "--d", std::to_string(cfg.d()));
  }
  if (a.center) args.emplace_back("--center");
  if (a.declared_p) add_common(args, "--declared-p", std::to_string(*a.declared_p));
  if (!a.output.empty()) add_common(args, "--output", a.output);

  Manifest m{json::object(), a.manifest};
  m.doc["command"] = "fit";
  m.doc["args"] = args;
  m.doc["params"] = {{"input", a.input},        {"output", a.output},   {"k", cfg.k},
                     {"l", cfg.probes()},       {"d", cfg.d()},         {"seed", a.seed},
                     {"seed_omega", cfg.seed_omega}, {"center", cfg.center}, {"threads", threads},
                     {"n", ds.rows()},          {"p", ds.cols()},       {"projector", projector_json(cfg.projector)}};
  m.doc["wall_seconds"] = seconds_since(start);
  m.doc["peak_accumulator_bytes"] = peak_accumulator_bytes(cfg.d(), cfg.probes(), cfg.center);
  m.doc["checksums"] = {{"input", checksum_hex(file_checksum(a.input))}, {"output", checksum_hex(checksum)}};
  emit_manifest(m, !target.to_file(), io);
  return kExitOk;
}

int cmd_transform(const TransformArgs& a, const Streams& io) {
  const auto start = Clock::now();
  const PcaModel model = load_model(std::filesystem::path(a.model));
  if (a.d && *a.d != model.d()) {
    throw DataError("model has d = " + std::to_string(model.d()) + " but --d " + std::to_string(*a.d) + " was given");
  }
  if (a.seed) {
    const DerivedSeeds seeds = derive_seeds(*a.seed);
    const auto& spec = model.projector().spec();
    if (model.projector().is_identity() || spec.seed_h != seeds.seed_h || spec.seed_xi != seeds.seed_xi) {
      throw DataError("model hash seeds do not match --seed " + std::to_string(*a.seed));
    }
  }
  const auto ds = parse_libsvm(a.input);

  OutputTarget target(a.output, io.out);
  std::string line;
  transform(
      ds, model,
      [&](std::size_t, std::span<const double> scores) {
        line.clear();
        for (std::size_t j = 0; j < scores.size(); ++j) {
          if (j > 0) line.push_back('\t');
          append_double(line, scores[j]);
        }
        line.push_back('\n');
        target.write(line);
      },
      !a.unwhitened);
  const std::uint64_t checksum = target.finish();

  std::vector<std::string> args{"transform"};
  add_common(args, "--model", a.model);
  add_common(args, "--input", a.input);
  if (a.unwhitened) args.emplace_back("--unwhitened");
  if (!a.output.empty()) add_common(args, "--output", a.output);

  Manifest m{json::object(), a.manifest};
  m.doc["command"] = "transform";
  m.doc["args"] = args;
  m.doc["params"] = {{"model", a.model}, {"input", a.input},      {"output", a.output},
                     {"whitened", !a.unwhitened}, {"k", model.k()}, {"d", model.d()},
                     {"center", model.centered()}, {"n", ds.rows()}, {"projector", projector_json(model.projector())}};
  m.doc["wall_seconds"] = seconds_since(start);
  m.doc["peak_accumulator_bytes"] = dense_basis_bytes(model.d(), model.k());
  m.doc["checksums"] = {{"input", checksum_hex(file_checksum(a.input))},
                        {"model", checksum_hex(file_checksum(a.model))},
                        {"output", checksum_hex(checksum)}};
  emit_manifest(m, !target.to_file(), io);
  return kExitOk;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

int cmd_diagnose(const DiagnoseArgs& a, const Streams& io) {
  const auto start = Clock::now();
  if (a.seeds == 0) throw ConfigError("--seeds must be at least 1");
  const std::size_t threads = a.parallel.value_or(default_threads());
  if (!a.identity) make_config(a.k, a.d, a.l, a.seed, a.center, false, std::nullopt, threads);
  // Validates epsilon and delta before any heavy work.
  recommended_d(1, a.delta, a.epsilon);

  const auto ds = parse_libsvm(a.input, a.declared_p);
  const ExactReference ref = exact_reference(ds, a.k, a.center);

  OutputTarget target(a.output, io.out);
  std::vector<double> sin_phi;
  HpcaConfig cfg;
  for (std::size_t s = 0; s < a.seeds; ++s) {
    const std::uint64_t seed = a.seed + s;
    cfg = make_config(a.k, a.d, a.l, seed, a.center, a.identity, ds.cols(), threads);
    const DiagnosticsReport report = compare_to_reference(ref, ds, cfg, a.epsilon, a.delta);
    sin_phi.push_back(report.sin_phi_frobenius);
    target.write("[seed " + std::to_string(seed) + "]\n" + report.to_text() + "\n");
  }
  target.write("median_sin_phi_frobenius=" + format_double(median(sin_phi)) + "\n");
  const std::uint64_t checksum = target.finish();

  std::vector<std::string> args{"diagnose"};
  add_common(args, "--input", a.input);
  add_common(args, "--k", std::to_string(a.k));
  add_common(args, "--l", std::to_string(cfg.probes()));
  add_common(args, "--epsilon", format_double(a.epsilon));
  add_common(args, "--delta", format_double(a.delta));
  add_common(args, "--seeds", std::to_string(a.seeds));
  add_common(args, "--seed", std::to_string(a.seed));
  add_common(args, "--parallel", std::to_string(threads));
  if (a.identity) {
    args.emplace_back("--identity");
  } else {
    add_common(args, "--d", std::to_string(cfg.d()));
  }
  if (a.center) args.emplace_back("--center");
  if (a.declared_p) add_common(args, "--declared-p", std::to_string(*a.declared_p));
  if (!a.output.empty()) add_common(args, "--output", a.output);

  Manifest m{json::object(), a.manifest};
  m.doc["command"] = "diagnose";
  m.doc["args"] = args;
  m.doc["params"] = {{"input", a.input}, {"output", a.output}, {"k", a.k},         {"l", cfg.probes()},
                     {"d", cfg.d()},     {"seed", a.seed},     {"seeds", a.seeds}, {"epsilon", a.epsilon},
                     {"delta", a.delta}, {"center", a.center}, {"threads", threads}, {"n", ds.rows()},
                     {"p", ds.cols()}};
  m.doc["wall_seconds"] = seconds_since(start);
  m.doc["peak_accumulator_bytes"] = peak_accumulator_bytes(cfg.d(), cfg.probes(), a.center);
  m.doc["checksums"] = {{"input", checksum_hex(file_checksum(a.input))}, {"output", checksum_hex(checksum)}};
  emit_manifest(m, !target.to_file(), io);
  return kExitOk;
}

std::vector<double> parse_spectrum(const std::string& csv) {
  std::vector<double> out;
  std::size_t begin = 0;
  while (begin <= csv.size()) {
    const std::size_t end = std::min(csv.find(',', begin), csv.size());
    const auto v = parse_double(std::string_view(csv).substr(begin, end - begin));
    if (!v) throw ConfigError("--spectrum must be a comma-separated list of numbers, got '" + csv + "'");
    out.push_back(*v);
    begin = end + 1;
  }
  return out;
}

int cmd_synth(const SynthArgs& a, const Streams& io) {
  const auto start = Clock::now();
  SynthSpec spec;
  spec.n = a.n;
  spec.p = a.p;
  spec.rank = a.rank;
  spec.spectrum = parse_spectrum(a.spectrum);
  spec.noise_sigma = a.noise;
  spec.density = a.density;
  spec.seed = a.seed;
  const auto ds = synth_lowrank(spec);

  OutputTarget target(a.output, io.out);
  auto reader = ds.reader();
  SparseRow row;
  while (reader.next(row)) target.write(format_libsvm_row(row) + "\n");
  const std::uint64_t checksum = target.finish();

  std::vector<std::string> args{"synth"};
  add_common(args, "--n", std::to_string(a.n));
  add_common(args, "--p", std::to_string(a.p));
  add_common(args, "--rank", std::to_string(a.rank));
  add_common(args, "--spectrum", a.spectrum);
  add_common(args, "--noise", format_double(a.noise));
  add_common(args, "--density", format_double(a.density));
  add_common(args, "--seed", std::to_string(a.seed));
  if (!a.output.empty()) add_common(args, "--output", a.output);

  Manifest m{json::object(), a.manifest};
  m.doc["command"] = "synth";
  m.doc["args"] = args;
  m.doc["params"] = {{"n", a.n},         {"p", a.p},         {"rank", a.rank}, {"spectrum", spec.spectrum},
                     {"noise", a.noise}, {"density", a.density}, {"seed", a.seed}, {"output", a.output}};
  m.doc["wall_seconds"] = seconds_since(start);
  m.doc["peak_accumulator_bytes"] = 0;
  m.doc["checksums"] = {{"output", checksum_hex(checksum)}};
  emit_manifest(m, !target.to_file(), io);
  return kExitOk;
}

std::string temp_output_path() {
  std::random_device rd;
  const std::uint64_t tag = (std::uint64_t{rd()} << 32) ^ rd();
  return (std::filesystem::temp_directory_path() / ("hpca-replay-" + checksum_hex(tag))).string();
}

int cmd_replay(const std::string& manifest_path, const Streams& io) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + manifest_path);
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("manifest " + manifest_path + " is not valid JSON: " + e.what());
  }
  std::vector<std::string> args;
  std::string expected;
  std::optional<std::string> expected_input;
  try {
    args = m.at("args").get<std::vector<std::string>>();
    expected = m.at("checksums").at("output").get<std::string>();
    if (m.at("checksums").contains("input")) expected_input = m["checksums"]["input"].get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError("manifest " + manifest_path + " is missing fields: " + e.what());
  }
  if (args.empty() || args[0] == "replay") throw FormatError("manifest does not describe a replayable command");

  if (expected_input) {
    const auto it = std::find(args.begin(), args.end(), "--input");
    if (it != args.end() && it + 1 != args.end() && checksum_hex(file_checksum(*(it + 1))) != *expected_input) {
      throw DataError("input " + *(it + 1) + " changed since the recorded run");
    }
  }

  std::string replay_path;
  const auto out_flag = std::find(args.begin(), args.end(), "--output");
  if (out_flag != args.end() && out_flag + 1 != args.end()) {
    replay_path = temp_output_path();
    *(out_flag + 1) = replay_path;
  }
  std::vector<std::string> argv_storage{"hpca"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : argv_storage) argv.push_back(s.c_str());

  std::ostringstream captured_out, captured_err;
  const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), captured_out, captured_err);
  std::string actual;
  if (rc == kExitOk) {
    actual = checksum_hex(replay_path.empty() ? fnv1a64(captured_out.str()) : file_checksum(replay_path));
  }
  if (!replay_path.empty()) {
    std::error_code ignored;
    std::filesystem::remove(replay_path, ignored);
  }
  if (rc != kExitOk) {
    io.err << captured_err.str();
    return rc;
  }
  if (actual != expected) throw DataError("replay output checksum " + actual + " differs from recorded " + expected);
  io.out << "replay: " << m.value("command", std::string("?")) << " output checksum " << actual << " matches\n";
  return kExitOk;
}

int exit_code_for(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kUsage:
      return kExitUsage;
    case ErrorCategory::kData:
      return kExitData;
    case ErrorCategory::kNumeric:
      return kExitNumeric;
  }
  return kExitData;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hashed randomized truncated PCA for sparse data"};
  app.name("hpca");
  app.require_subcommand(1, 1);

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model on a libsvm file");
  fit_cmd->add_option("--input", fit_args.input, "libsvm input")->required();
  fit_cmd->add_option("--k", fit_args.k, "number of components")->required();
  fit_cmd->add_option("--d", fit_args.d, "hashed dimension");
  fit_cmd->add_option("--l", fit_args.l, "probe columns (default k)");
  fit_cmd->add_option("--seed", fit_args.seed, "master seed");
  fit_cmd->add_flag("--center", fit_args.center, "subtract the hashed mean");
  fit_cmd->add_flag("--identity", fit_args.identity, "skip hashing (d = p)");
  fit_cmd->add_option("--output", fit_args.output, "model path (default stdout)");
  fit_cmd->add_option("--declared-p", fit_args.declared_p, "feature count");
  fit_cmd->add_option("--parallel", fit_args.parallel, "pass workers (default $HPCA_THREADS or 1)");
  fit_cmd->add_option("--manifest", fit_args.manifest, "write the run manifest here");

  TransformArgs tr_args;
  auto* tr_cmd = app.add_subcommand("transform", "Project rows with a fitted model");
  tr_cmd->add_option("--model", tr_args.model, "model file")->required();
  tr_cmd->add_option("--input", tr_args.input, "libsvm input")->required();
  tr_cmd->add_option("--output", tr_args.output, "scores path (default stdout)");
  tr_cmd->add_flag("--unwhitened", tr_args.unwhitened, "omit the 1/sigma scaling");
  tr_cmd->add_option("--d", tr_args.d, "expected hashed dimension");
  tr_cmd->add_option("--seed", tr_args.seed, "expected master seed");
  tr_cmd->add_option("--manifest", tr_args.manifest, "write the run manifest here");

  DiagnoseArgs dg_args;
  auto* dg_cmd = app.add_subcommand("diagnose", "Compare hashed fits against the exact decomposition");
  dg_cmd->add_option("--input", dg_args.input, "libsvm input")->required();
  dg_cmd->add_option("--k", dg_args.k, "number of components")->required();
  dg_cmd->add_option("--d", dg_args.d, "hashed dimension");
  dg_cmd->add_option("--l", dg_args.l, "probe columns (default k)");
  dg_cmd->add_option("--epsilon", dg_args.epsilon, "epsilon")->capture_default_str();
  dg_cmd->add_option("--delta", dg_args.delta, "delta")->capture_default_str();
  dg_cmd->add_option("--seeds", dg_args.seeds, "hash draws")->capture_default_str();
  dg_cmd->add_option("--seed", dg_args.seed, "first master seed");
  dg_cmd->add_flag("--center", dg_args.center, "subtract the mean");
  dg_cmd->add_flag("--identity", dg_args.identity, "skip hashing (d = p)");
  dg_cmd->add_option("--declared-p", dg_args.declared_p, "feature count");
  dg_cmd->add_option("--parallel", dg_args.parallel, "pass workers (default $HPCA_THREADS or 1)");
  dg_cmd->add_option("--output", dg_args.output, "report path (default stdout)");
  dg_cmd->add_option("--manifest", dg_args.manifest, "write the run manifest here");

  SynthArgs sy_args;
  auto* sy_cmd = app.add_subcommand("synth", "Write a synthetic low-rank libsvm file");
  sy_cmd->add_option("--n", sy_args.n, "rows")->required();
  sy_cmd->add_option("--p", sy_args.p, "columns")->required();
  sy_cmd->add_option("--rank", sy_args.rank, "planted rank")->required();
  sy_cmd->add_option("--spectrum", sy_args.spectrum, "comma-separated singular values")->required();
  sy_cmd->add_option("--noise", sy_args.noise, "noise standard deviation");
  sy_cmd->add_option("--density", sy_args.density, "kept fraction of entries");
  sy_cmd->add_option("--seed", sy_args.seed, "seed");
  sy_cmd->add_option("--output", sy_args.output, "libsvm path (default stdout)");
  sy_cmd->add_option("--manifest", sy_args.manifest, "write the run manifest here");

  std::string replay_manifest;
  auto* rp_cmd = app.add_subcommand("replay", "Re-run a manifest and compare output checksums");
  rp_cmd->add_option("--manifest", replay_manifest, "manifest file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const Streams io{out, err};
  try {
    if (*fit_cmd) return cmd_fit(fit_args, io);
    if (*tr_cmd) return cmd_transform(tr_args, io);
    if (*dg_cmd) return cmd_diagnose(dg_args, io);
    if (*sy_cmd) return cmd_synth(sy_args, io);
    return cmd_replay(replay_manifest, io);
  } catch (const Error& e) {
    err << "hpca: " << e.what() << "\n";
    return exit_code_for(e.category());
  } catch (const std::bad_alloc&) {
    err << "hpca: out of memory\n";
    return kExitData;
  }
}

}  // namespace hpca::cli
