#include "gpclf/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include "json.hpp"

namespace gpclf {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Benchmark b) { return b == Benchmark::pendulum ? "pendulum" : "bicycle"; }

namespace {

std::string join_diagnostics(const std::vector<std::string>& d) {
  std::string s = "invalid configuration:";
  for (const std::string& line : d) s += "\n  " + line;
  return s;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------- parsing

class Reader {
public:
  explicit Reader(const boost::property_tree::ptree& tree) : tree_(tree) {}

  std::vector<std::string>& diagnostics() { return diag_; }

  std::optional<std::string> raw(const std::string& section, const std::string& key) {
    used_.insert(section + "." + key);
    const auto sec = tree_.get_child_optional(section);
    if (!sec) return std::nullopt;
    const auto v = sec->get_optional<std::string>(key);
    if (!v) return std::nullopt;
    return *v;
  }

  void require(const std::string& section, const std::string& key) {
    if (!raw(section, key)) diag_.push_back(section + "." + key + " required");
  }

  std::optional<std::vector<double>> numbers(const std::string& section, const std::string& key) {
    const auto text = raw(section, key);
    if (!text) return std::nullopt;
    std::vector<double> out;
    std::istringstream is(*text);
    std::string tok;
    while (is >> tok) {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
        diag_.push_back(section + "." + key + ": '" + tok + "' is not a finite number");
        return std::nullopt;
      }
      out.push_back(v);
    }
    if (out.empty()) {
      diag_.push_back(section + "." + key + ": empty value");
      return std::nullopt;
    }
    return out;
  }

  void real(const std::string& section, const std::string& key, double& target) {
    const auto v = numbers(section, key);
    if (!v) return;
    if (v->size() != 1) {
      diag_.push_back(section + "." + key + ": expected one number");
      return;
    }
    target = v->front();
  }

  template <typename Int>
  void integer(const std::string& section, const std::string& key, Int& target) {
    const auto text = raw(section, key);
    if (!text) return;
    std::string s = *text;
    s.erase(0, s.find_first_not_of(" \t"));
    s.erase(s.find_last_not_of(" \t") + 1);
    Int v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      diag_.push_back(section + "." + key + ": '" + s + "' is not an integer");
      return;
    }
    target = v;
  }

  void boolean(const std::string& section, const std::string& key, bool& target) {
    const auto text = raw(section, key);
    if (!text) return;
    if (*text == "true" || *text == "1")
      target = true;
    else if (*text == "false" || *text == "0")
      target = false;
    else
      diag_.push_back(section + "." + key + ": expected true or false");
  }

  /// Keys present in the file that nothing asked for.
  void reject_unknown() {
    for (const auto& [section, child] : tree_) {
      if (child.empty() && !child.data().empty()) {
        diag_.push_back(section + ": key outside of any section");
        continue;
      }
      for (const auto& [key, value] : child) {
        (void)value;
        if (!used_.count(section + "." + key)) diag_.push_back(section + "." + key + ": unknown key");
      }
    }
  }

private:
  const boost::property_tree::ptree& tree_;
  std::vector<std::string> diag_;
  std::set<std::string> used_;
};

// square matrix from k diagonal entries or k*k row-major entries
std::optional<Eigen::MatrixXd> square(Reader& r, const std::string& section, const std::string& key, Eigen::Index k) {
  const auto v = r.numbers(section, key);
  if (!v) return std::nullopt;
  const auto n = static_cast<Eigen::Index>(v->size());
  if (n == k) return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v->data(), k)).asDiagonal().toDenseMatrix();
  if (n == k * k) return Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>>(v->data(), k, k);
  r.diagnostics().push_back(section + "." + key + ": expected " + std::to_string(k) + " diagonal or " +
                            std::to_string(k * k) + " row-major entries");
  return std::nullopt;
}

void read_pendulum(Reader& r, const std::string& section, PendulumParams& p) {
  r.real(section, "mass", p.mass);
  r.real(section, "length", p.length);
  r.real(section, "gravity", p.gravity);
  r.real(section, "damping", p.damping);
}

void read_bicycle(Reader& r, const std::string& section, BicycleParams& p) {
  r.real(section, "f_mu", p.f_mu);
  r.real(section, "b_v", p.b_v);
  r.real(section, "b_gamma", p.b_gamma);
}

template <typename F>
void collect(std::vector<std::string>& out, const std::string& what, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    out.push_back(what + ": " + e.what());
  }
}

// --------------------------------------------------------------- hashing

class Fnv {
public:
  void add(const std::string& s) {
    for (unsigned char c : s) {
      h_ ^= c;
      h_ *= 1099511628211ull;
    }
    h_ ^= 0xff;
    h_ *= 1099511628211ull;
  }
  void add(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", v);
    add(std::string(buf));
  }
  void add(std::uint64_t v) { add(std::to_string(v)); }
  void add(const Eigen::MatrixXd& m) {
    add(static_cast<std::uint64_t>(m.rows()));
    add(static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) add(m(i, j));
  }
  std::uint64_t value() const { return h_; }

private:
  std::uint64_t h_ = 14695981039346656037ull;
};

// ------------------------------------------------------------ checkpoints

json matrix_json(const Eigen::MatrixXd& m) {
  json cols = json::array();
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    std::vector<double> c(m.col(j).data(), m.col(j).data() + m.rows());
    cols.push_back(c);
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"columns", cols}};
}

Eigen::MatrixXd matrix_from(const json& j) {
  Eigen::MatrixXd m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const json& cols = j.at("columns");
  if (static_cast<Eigen::Index>(cols.size()) != m.cols()) throw std::runtime_error("column count mismatch");
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const auto v = cols.at(static_cast<std::size_t>(c)).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != m.rows()) throw std::runtime_error("row count mismatch");
    m.col(c) = Eigen::Map<const Eigen::VectorXd>(v.data(), m.rows());
  }
  return m;
}

json kernel_json(const ADPKernel& k) {
  json bases = json::array();
  for (const SEKernel& b : k.bases()) {
    std::vector<double> l(b.lengthscales().data(), b.lengthscales().data() + b.dim());
    bases.push_back(json{{"signal_variance", b.signal_variance()}, {"lengthscales", l}});
  }
  return bases;
}

ADPKernel kernel_from(const json& j) {
  std::vector<SEKernel> bases;
  for (const json& b : j) {
    const auto l = b.at("lengthscales").get<std::vector<double>>();
    bases.emplace_back(b.at("signal_variance").get<double>(),
                       Eigen::Map<const Eigen::VectorXd>(l.data(), static_cast<Eigen::Index>(l.size())));
  }
  return ADPKernel(std::move(bases));
}

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ----------------------------------------------------------------- output

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

template <typename F>
void write_file(const fs::path& path, F&& body) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  body(os);
  os.flush();
  if (!os) throw IoError("write to " + path.string() + " failed");
}

void write_episode(std::ostream& os, const EpisodeRecord& r) {
  os << "episode = " << r.episode << " level = " << num(r.level) << " data = " << r.data_count
     << " accepted = " << r.accepted << " rejected = " << r.rejected << " certificates = " << r.certificates_checked
     << " failed = " << r.certificates_failed << " probe_mean_sigma = " << num(r.probe_mean_sigma)
     << " probe_max_sigma = " << num(r.probe_max_sigma) << " stalled = " << r.stalled
     << " persistent = " << r.persistent << "\n";
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> diagnostics)
    : std::runtime_error(join_diagnostics(diagnostics)), diagnostics_(std::move(diagnostics)) {}

ExperimentConfig parse_config(std::istream& is) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError({"line " + std::to_string(e.line()) + ": " + e.message()});
  }
  Reader r(tree);
  ExperimentConfig cfg;

  const auto bench = r.raw("experiment", "benchmark");
  if (!bench) {
    r.diagnostics().push_back("experiment.benchmark required");
  } else if (*bench == "bicycle") {
    cfg.benchmark = Benchmark::bicycle;
  } else if (*bench != "pendulum") {
    r.diagnostics().push_back("experiment.benchmark: expected pendulum or bicycle, got '" + *bench + "'");
  }
  r.integer("experiment", "seed", cfg.seed);
  if (const auto dir = r.raw("experiment", "output_dir")) cfg.output_dir = *dir;

  const Eigen::Index n = cfg.state_dim(), m = cfg.input_dim();
  if (cfg.benchmark == Benchmark::pendulum) {
    read_pendulum(r, "plant", cfg.pendulum_plant);
    read_pendulum(r, "nominal", cfg.pendulum_nominal);
  } else {
    read_bicycle(r, "plant", cfg.bicycle_plant);
    read_bicycle(r, "nominal", cfg.bicycle_nominal);
    r.real("sim", "v_ref", cfg.v_ref);
  }

  r.require("clf", "Q");
  r.require("clf", "R");
  r.require("clf", "lambda");
  if (auto Q = square(r, "clf", "Q", n)) cfg.Q = *Q;
  if (auto R = square(r, "clf", "R", m)) cfg.R = *R;
  r.real("clf", "lambda", cfg.lambda);

  r.real("controller", "slack_penalty", cfg.slack_penalty);
  r.real("controller", "beta", cfg.beta);
  r.real("controller", "delta", cfg.delta);
  r.real("controller", "slack_activation", cfg.slack_activation);
  cfg.U = InputBox::symmetric(m, 10.0);
  if (const auto u = r.numbers("controller", "u_max")) {
    if (u->size() == 1) {
      cfg.U = InputBox::symmetric(m, u->front());
    } else if (static_cast<Eigen::Index>(u->size()) == m) {
      const Eigen::Map<const Eigen::VectorXd> ub(u->data(), m);
      cfg.U = InputBox{-ub, ub};
    } else {
      r.diagnostics().push_back("controller.u_max: expected 1 or " + std::to_string(m) + " entries");
    }
  }

  r.require("kernel", "signal_variance");
  r.require("kernel", "lengthscales");
  if (const auto sv = r.numbers("kernel", "signal_variance")) {
    if (static_cast<Eigen::Index>(sv->size()) != m + 1)
      r.diagnostics().push_back("kernel.signal_variance: expected " + std::to_string(m + 1) + " entries");
    else
      cfg.signal_variance = *sv;
  }
  if (const auto ls = r.numbers("kernel", "lengthscales")) {
    const auto k = static_cast<Eigen::Index>(ls->size());
    if (k == n) {
      cfg.lengthscales = Eigen::Map<const Eigen::VectorXd>(ls->data(), n).replicate(1, m + 1);
    } else if (k == n * (m + 1)) {
      cfg.lengthscales = Eigen::Map<const Eigen::MatrixXd>(ls->data(), n, m + 1);
    } else {
      r.diagnostics().push_back("kernel.lengthscales: expected " + std::to_string(n) + " or " +
                                std::to_string(n * (m + 1)) + " entries");
    }
  }
  r.real("kernel", "noise_std", cfg.episodic.noise_std);

  EpisodeConfig& e = cfg.episodic;
  r.real("episodic", "c0", e.c0);
  if (const auto dc = r.numbers("episodic", "delta_c")) e.delta_c = *dc;
  r.integer("episodic", "exploration_points", e.exploration_points);
  r.integer("episodic", "rollout_steps", e.rollout_steps);
  r.integer("episodic", "candidate_pool_size", e.candidate_pool_size);
  r.integer("episodic", "total_episodes", e.total_episodes);
  r.integer("episodic", "initial_rollouts", e.initial_rollouts);
  r.integer("episodic", "initial_rollout_steps", e.initial_rollout_steps);
  r.real("episodic", "measurement_noise", e.measurement_noise);
  r.real("episodic", "certificate_margin", e.certificate_margin);
  r.integer("episodic", "probe_per_dim", e.probe_per_dim);
  r.integer("episodic", "retrain_restarts", e.retrain_restarts);
  r.integer("episodic", "train_restarts", e.initial_training.restarts);
  r.integer("episodic", "train_max_iters", e.initial_training.max_iters);
  r.integer("episodic", "train_max_points", e.initial_training.max_points);
  r.boolean("episodic", "train_noise", e.initial_training.train_noise);

  r.require("sim", "dt");
  r.require("sim", "horizon");
  r.require("sim", "x0");
  r.real("sim", "dt", cfg.dt);
  r.real("sim", "horizon", cfg.horizon);
  r.real("sim", "threshold", cfg.threshold);
  if (const auto x0 = r.numbers("sim", "x0"))
    cfg.x0 = Eigen::Map<const Eigen::VectorXd>(x0->data(), static_cast<Eigen::Index>(x0->size()));

  r.reject_unknown();
  std::vector<std::string> diag = std::move(r.diagnostics());
  if (diag.empty()) diag = cfg.check();
  if (!diag.empty()) throw ConfigError(std::move(diag));
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path);
  return parse_config(is);
}

std::vector<std::string> validate_config(const std::string& path) {
  try {
    load_config(path);
  } catch (const ConfigError& e) {
    return e.diagnostics();
  }
  return {};
}

std::vector<std::string> ExperimentConfig::check() const {
  std::vector<std::string> d;
  const Eigen::Index n = state_dim(), m = input_dim();
  if (benchmark == Benchmark::pendulum) {
    collect(d, "plant", [&] { pendulum_plant.validate(); });
    collect(d, "nominal", [&] { pendulum_nominal.validate(); });
  } else {
    collect(d, "plant", [&] { bicycle_plant.validate(); });
    collect(d, "nominal", [&] { bicycle_nominal.validate(); });
    if (!(v_ref > 0.0)) d.push_back("sim.v_ref: must be positive");
  }
  bool clf_ok = true;
  if (Q.rows() != n || Q.cols() != n) {
    d.push_back("clf.Q: must be " + std::to_string(n) + " x " + std::to_string(n));
    clf_ok = false;
  } else if (!Q.isApprox(Q.transpose()) ||
             Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Q).eigenvalues().minCoeff() <= 0.0) {
    d.push_back("clf.Q: must be symmetric positive definite");
    clf_ok = false;
  }
  if (R.rows() != m || R.cols() != m) {
    d.push_back("clf.R: must be " + std::to_string(m) + " x " + std::to_string(m));
    clf_ok = false;
  } else if (!R.isApprox(R.transpose()) ||
             Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(R).eigenvalues().minCoeff() <= 0.0) {
    d.push_back("clf.R: must be symmetric positive definite");
    clf_ok = false;
  }
  if (!(lambda > 0.0)) d.push_back("clf.lambda: must be positive");
  if (!(slack_penalty > 0.0)) d.push_back("controller.slack_penalty: must be positive");
  if (!(beta >= 0.0)) d.push_back("controller.beta: must be non-negative");
  if (!(delta > 0.0 && delta < 1.0)) d.push_back("controller.delta: must lie in (0, 1)");
  if (!(slack_activation >= 0.0)) d.push_back("controller.slack_activation: must be non-negative");
  collect(d, "controller.u_max", [&] {
    U.validate();
    if (U.dim() != m) throw std::invalid_argument("wrong dimension");
    if (!U.contains(Eigen::VectorXd::Zero(m))) throw std::invalid_argument("box must contain zero");
  });
  if (static_cast<Eigen::Index>(signal_variance.size()) != m + 1)
    d.push_back("kernel.signal_variance: expected " + std::to_string(m + 1) + " entries");
  else if (std::any_of(signal_variance.begin(), signal_variance.end(), [](double v) { return !(v > 0.0); }))
    d.push_back("kernel.signal_variance: entries must be positive");
  if (lengthscales.rows() != n || lengthscales.cols() != m + 1)
    d.push_back("kernel.lengthscales: wrong size");
  else if (!(lengthscales.array() > 0.0).all())
    d.push_back("kernel.lengthscales: entries must be positive");
  if (!(dt > 0.0)) d.push_back("sim.dt: must be positive");
  if (!(horizon >= dt)) d.push_back("sim.horizon: must be at least sim.dt");
  if (!(threshold > 0.0 && threshold < 1.0)) d.push_back("sim.threshold: must lie in (0, 1)");
  const Eigen::Index x0_dim = benchmark == Benchmark::pendulum ? 2 : 5;
  if (x0.size() != x0_dim) d.push_back("sim.x0: expected " + std::to_string(x0_dim) + " entries");
  collect(d, "episodic", [&] { episode_config(*this).validate(); });
  if (clf_ok && d.empty()) collect(d, "clf", [&] { make_problem(*this); });
  return d;
}

std::uint64_t ExperimentConfig::model_hash() const {
  Fnv h;
  h.add(to_string(benchmark));
  h.add(seed);
  if (benchmark == Benchmark::pendulum) {
    for (const PendulumParams* p : {&pendulum_plant, &pendulum_nominal}) {
      h.add(p->mass);
      h.add(p->length);
      h.add(p->gravity);
      h.add(p->damping);
    }
  } else {
    for (const BicycleParams* p : {&bicycle_plant, &bicycle_nominal}) {
      h.add(p->f_mu);
      h.add(p->b_v);
      h.add(p->b_gamma);
    }
    h.add(v_ref);
  }
  h.add(Q);
  h.add(R);
  h.add(lambda);
  h.add(slack_penalty);
  h.add(beta);
  h.add(Eigen::MatrixXd(U.lower));
  h.add(Eigen::MatrixXd(U.upper));
  for (double v : signal_variance) h.add(v);
  h.add(lengthscales);
  h.add(dt);
  const EpisodeConfig e = episode_config(*this);
  h.add(e.c0);
  for (double v : e.delta_c) h.add(v);
  for (int v : {e.exploration_points, e.rollout_steps, e.pool_size(), e.total_episodes, e.initial_rollouts,
                e.initial_rollout_steps, e.probe_per_dim, e.retrain_restarts, e.initial_training.restarts,
                e.initial_training.max_iters})
    h.add(static_cast<std::uint64_t>(v));
  h.add(static_cast<std::uint64_t>(e.initial_training.max_points));
  h.add(static_cast<std::uint64_t>(e.initial_training.train_noise));
  h.add(e.measurement_noise);
  h.add(e.noise_std);
  h.add(e.certificate_margin);
  return h.value();
}

EpisodicProblem make_problem(const ExperimentConfig& cfg) {
  ControlAffineSystem plant, nominal;
  if (cfg.benchmark == Benchmark::pendulum) {
    plant = pendulum(cfg.pendulum_plant);
    nominal = pendulum(cfg.pendulum_nominal);
  } else {
    plant = bicycle_tracking(cfg.bicycle_plant, cfg.v_ref);
    nominal = bicycle_tracking(cfg.bicycle_nominal, cfg.v_ref);
  }
  ControllerConfig cc;
  cc.lambda = cfg.lambda;
  cc.slack_penalty = cfg.slack_penalty;
  cc.U = cfg.U;
  cc.beta = cfg.beta;
  std::vector<SEKernel> bases;
  for (std::size_t i = 0; i < cfg.signal_variance.size(); ++i)
    bases.emplace_back(cfg.signal_variance[i], cfg.lengthscales.col(static_cast<Eigen::Index>(i)));
  QuadraticCLF clf = clf_from_lqr(nominal, cfg.Q, cfg.R);
  return EpisodicProblem{std::move(plant), std::move(nominal), std::move(clf), std::move(cc),
                         ADPKernel(std::move(bases))};
}

Eigen::VectorXd initial_state(const ExperimentConfig& cfg) {
  if (cfg.benchmark == Benchmark::pendulum) return cfg.x0;
  return bicycle_error(cfg.x0, cfg.v_ref);
}

EpisodeConfig episode_config(const ExperimentConfig& cfg) {
  EpisodeConfig e = cfg.episodic;
  e.dt = cfg.dt;
  e.seed = cfg.seed;
  e.initial_training.seed = cfg.seed;
  return e;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  json j;
  j["format"] = "gpclf-checkpoint";
  j["version"] = 1;
  j["config_hash"] = hex(c.config_hash);
  j["episodes"] = c.episodes;
  j["levels"] = c.levels;
  j["X"] = matrix_json(c.data.X);
  j["Y"] = matrix_json(c.data.Y);
  j["z"] = std::vector<double>(c.data.z.data(), c.data.z.data() + c.data.z.size());
  j["noise_std"] = c.data.noise_std;
  j["kernel"] = kernel_json(c.kernel);
  if (c.baseline_kernel) {
    j["baseline_kernel"] = kernel_json(*c.baseline_kernel);
    j["baseline_noise_std"] = c.baseline_noise_std;
  }
  write_file(path, [&](std::ostream& os) { os << j.dump(1) << "\n"; });
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read checkpoint " + path);
  try {
    const json j = json::parse(is);
    if (j.at("format") != "gpclf-checkpoint" || j.at("version") != 1)
      throw std::runtime_error("not a version 1 checkpoint");
    Checkpoint c;
    c.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    c.episodes = j.at("episodes").get<int>();
    c.levels = j.at("levels").get<std::vector<double>>();
    c.data.X = matrix_from(j.at("X"));
    c.data.Y = matrix_from(j.at("Y"));
    const auto z = j.at("z").get<std::vector<double>>();
    c.data.z = Eigen::Map<const Eigen::VectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
    c.data.noise_std = j.at("noise_std").get<double>();
    if (c.data.X.cols() != c.data.z.size() || c.data.Y.cols() != c.data.z.size())
      throw std::runtime_error("data sizes disagree");
    c.kernel = kernel_from(j.at("kernel"));
    if (j.contains("baseline_kernel")) {
      c.baseline_kernel = kernel_from(j.at("baseline_kernel"));
      c.baseline_noise_std = j.at("baseline_noise_std").get<double>();
    }
    if (c.levels.empty()) throw std::runtime_error("no levels");
    return c;
  } catch (const std::exception& e) {
    throw IoError("malformed checkpoint " + path + ": " + e.what());
  }
}

double ControllerReport::fallback_fraction() const {
  return trajectory.size() ? static_cast<double>(fallback_steps) / static_cast<double>(trajectory.size()) : 0.0;
}

const ControllerReport& ComparisonReport::controller(const std::string& name) const {
  for (const ControllerReport& c : controllers)
    if (c.name == name) return c;
  throw std::out_of_range("no controller named " + name);
}

TrainingSet state_only(const TrainingSet& data) {
  TrainingSet out;
  out.X = data.X;
  out.Y = Eigen::MatrixXd::Ones(1, data.size());
  out.z = data.z;
  out.noise_std = data.noise_std;
  return out;
}

ComparisonReport run_experiment(const ExperimentConfig& cfg, const RunOptions& options) {
  if (auto d = cfg.check(); !d.empty()) throw ConfigError(std::move(d));
  const EpisodicProblem problem = make_problem(cfg);
  const EpisodeConfig ecfg = episode_config(cfg);
  const fs::path out = cfg.output_dir;
  if (options.write_files) ensure_dir(out);

  ComparisonReport report;
  report.benchmark = cfg.benchmark;
  report.seed = cfg.seed;
  report.config_hash = cfg.model_hash();

  Checkpoint ck;
  ck.config_hash = report.config_hash;
  const auto t0 = std::chrono::steady_clock::now();
  if (options.load_checkpoint) {
    ck = load_checkpoint(*options.load_checkpoint);
    if (ck.config_hash != report.config_hash && !options.ignore_hash)
      throw HashMismatch("checkpoint " + *options.load_checkpoint + " was made with config hash " +
                         hex(ck.config_hash) + ", current config hashes to " + hex(report.config_hash));
    if (ck.data.state_dim() != cfg.state_dim() || ck.data.p() != cfg.input_dim() + 1 ||
        ck.kernel.p() != cfg.input_dim() + 1 || ck.kernel.state_dim() != cfg.state_dim())
      throw IoError("checkpoint dimensions do not match the benchmark");
    report.model = std::make_shared<const GPModel>(ck.kernel, ck.data);
    report.roa.levels = ck.levels;
    report.roa.certified.assign(ck.levels.size(), true);
  } else {
    std::ofstream log;
    if (options.write_files) {
      ensure_dir(out / "checkpoints");
      log.open(out / "episodes.log", std::ios::binary);
      if (!log) throw IoError("cannot open " + (out / "episodes.log").string());
    }
    const AlgorithmState state = run_algorithm(problem, ecfg, [&](const AlgorithmState& s) {
      if (!options.write_files) return;
      write_episode(log, s.log.back());
      log.flush();
      if (!log) throw IoError("write to episodes.log failed");
      Checkpoint c;
      c.config_hash = report.config_hash;
      c.episodes = s.episodes_done();
      c.levels = s.roa.levels;
      c.data = s.data;
      c.kernel = s.kernel;
      char name[32];
      std::snprintf(name, sizeof name, "episode_%02d.json", c.episodes);
      save_checkpoint((out / "checkpoints" / name).string(), c);
    });
    report.model = state.model;
    report.roa = state.roa;
    report.episodes = state.log;
    ck.episodes = state.episodes_done();
    ck.levels = state.roa.levels;
    ck.data = state.data;
    ck.kernel = state.kernel;
  }

  const TrainingSet state_data = state_only(report.model->data());
  if (!ck.baseline_kernel) {
    TrainOptions topts = ecfg.initial_training;
    TrainingSet init = state_data;
    init.noise_std = ecfg.noise_std;
    const TrainResult tr = train_hyperparams(ADPKernel({problem.prior.base(0)}), init, topts);
    ck.baseline_kernel = tr.kernel;
    ck.baseline_noise_std = tr.noise_std;
  }
  TrainingSet baseline_data = state_data;
  baseline_data.noise_std = ck.baseline_noise_std;
  report.baseline = std::make_shared<const GPModel>(*ck.baseline_kernel, baseline_data);
  report.training_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (options.write_files) save_checkpoint((out / "checkpoint.json").string(), ck);

  const Eigen::VectorXd x0 = initial_state(cfg);
  report.V0 = problem.clf.value(x0);
  report.threshold_value = cfg.threshold * report.V0;
  const auto value = [&](const Eigen::VectorXd& x) { return problem.clf.value(x); };
  const GPModel& model = *report.model;
  const GPModel& baseline = *report.baseline;

  struct Entry {
    std::string name;
    std::function<ControlOutput(const ControllerConfig&, const Eigen::VectorXd&)> law;
  };
  const std::vector<Entry> entries{
      {"clf_qp_nominal", [&](const ControllerConfig& c, const Eigen::VectorXd& x) { return clf_qp(problem.nominal, problem.clf, c, x); }},
      {"clf_qp_plant", [&](const ControllerConfig& c, const Eigen::VectorXd& x) { return clf_qp(problem.plant, problem.clf, c, x); }},
      {"gp_clf_qp_baseline", [&](const ControllerConfig& c, const Eigen::VectorXd& x) { return gp_clf_qp_baseline(problem.nominal, problem.clf, baseline, c, x); }},
      {"gp_clf_socp", [&](const ControllerConfig& c, const Eigen::VectorXd& x) { return gp_clf_socp(problem.nominal, problem.clf, model, c, x); }},
  };
  if (options.write_files && options.dump_failed_solves) ensure_dir(out / "failed_solves");

  RolloutOptions ropts;
  ropts.horizon = cfg.horizon;
  ropts.dt = cfg.dt;
  for (const Entry& e : entries) {
    ControllerConfig cc = problem.controller;
    int failures = 0;
    if (options.write_files && options.dump_failed_solves) {
      cc.on_failure = [&, name = e.name](const ConicProgram& prog, const Eigen::VectorXd& x) {
        char file[64];
        std::snprintf(file, sizeof file, "%s_%04d.txt", name.c_str(), failures++);
        write_file(out / "failed_solves" / file, [&](std::ostream& os) {
          os << "% state";
          for (Eigen::Index i = 0; i < x.size(); ++i) os << " " << num(x(i));
          os << "\n";
          dump_problem(os, prog);
        });
      };
    }
    const Controller ctrl = [&](const Eigen::VectorXd& x) { return e.law(cc, x); };
    ControllerReport rep;
    rep.name = e.name;
    rep.trajectory = rollout(problem.plant, ctrl, value, x0, ropts);
    const Trajectory& tr = rep.trajectory;
    rep.final_V = tr.records.back().V;
    for (const TrajectoryRecord& r : tr.records) {
      if (!rep.time_to_threshold && r.V <= report.threshold_value) rep.time_to_threshold = r.t;
      if (r.slack > cfg.slack_activation) ++rep.slack_activations;
    }
    rep.fallback_steps = tr.fallback_count();
    if (!tr.step_seconds.empty()) {
      rep.mean_latency = std::accumulate(tr.step_seconds.begin(), tr.step_seconds.end(), 0.0) /
                         static_cast<double>(tr.step_seconds.size());
      rep.median_latency = median(tr.step_seconds);
      rep.max_latency = *std::max_element(tr.step_seconds.begin(), tr.step_seconds.end());
    }
    rep.csv_path = e.name + ".csv";
    if (options.write_files)
      write_file(out / rep.csv_path, [&](std::ostream& os) { write_csv(os, tr); });
    report.controllers.push_back(std::move(rep));
  }

  if (options.write_files) {
    write_file(out / "report.txt", [&](std::ostream& os) { write_report(os, report); });
    write_file(out / "timing.txt", [&](std::ostream& os) { write_timing(os, report); });
  }
  return report;
}

void write_report(std::ostream& os, const ComparisonReport& r) {
  os << "benchmark = " << to_string(r.benchmark) << "\n";
  os << "seed = " << r.seed << "\n";
  os << "config_hash = " << hex(r.config_hash) << "\n";
  os << "episodes = " << r.roa.levels.size() - 1 << "\n";
  os << "levels =";
  for (double c : r.roa.levels) os << " " << num(c);
  os << "\n";
  os << "final_level = " << num(r.roa.final_level()) << "\n";
  os << "data_points = " << r.model->size() << "\n";
  os << "V0 = " << num(r.V0) << "\n";
  os << "threshold = " << num(r.threshold_value) << "\n";
  for (const ControllerReport& c : r.controllers) {
    const std::string k = c.name + ".";
    os << k << "final_V = " << num(c.final_V) << "\n";
    os << k << "time_to_threshold = " << (c.time_to_threshold ? num(*c.time_to_threshold) : "none") << "\n";
    os << k << "slack_activations = " << c.slack_activations << "\n";
    os << k << "fallback_steps = " << c.fallback_steps << "\n";
    os << k << "steps = " << c.trajectory.size() << "\n";
    os << k << "csv = " << c.csv_path << "\n";
  }
}

void write_timing(std::ostream& os, const ComparisonReport& r) {
  os << "training_seconds = " << num(r.training_seconds) << "\n";
  for (const EpisodeRecord& e : r.episodes) os << "episode." << e.episode << ".wall_seconds = " << num(e.wall_seconds) << "\n";
  for (const ControllerReport& c : r.controllers) {
    const std::string k = c.name + ".";
    os << k << "mean_latency_ms = " << num(1e3 * c.mean_latency) << "\n";
    os << k << "median_latency_ms = " << num(1e3 * c.median_latency) << "\n";
    os << k << "max_latency_ms = " << num(1e3 * c.max_latency) << "\n";
  }
}

}  // namespace gpclf
