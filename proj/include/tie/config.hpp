#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "tie/data.hpp"
#include "tie/io.hpp"

namespace tie {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class RunMode { tie, no_tie_baseline };

inline std::string to_string(RunMode m) {
  return m == RunMode::tie ? "tie" : "no_tie_baseline";
}

inline RunMode parse_run_mode(const std::string& s) {
  if (s == "tie") return RunMode::tie;
  if (s == "no_tie_baseline") return RunMode::no_tie_baseline;
  throw ConfigError("config: unknown mode '" + s +
                    "', expected tie or no_tie_baseline");
}

struct ModelConfig {
  std::vector<std::size_t> classifier_hidden{256, 128};
  std::vector<std::size_t> generator_hidden{256, 256};
  std::size_t latent_dim = 32;
};

// loop hyperparameters; defaults follow the reference setup
struct TieHyper {
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double lr_classifier = 1e-4;
  double lr_generator = 1e-3;
  double lambda = 0.5;       // threshold strictness
  double alpha = 0.1;        // KL weight
  double beta = 1.0;         // CE weight
  double gamma_start = 10.0; // diversity weight ramp
  double gamma_end = 100.0;
  int sign_mode = -1;        // -1 rewards diversity; +1 keeps the literal sign
  std::size_t inversion_steps = 100;
  std::size_t inversion_batch = 32;
  std::size_t per_class_inversions = 200;
  std::size_t garbage_init_count = 500;
  std::size_t garbage_capacity_factor = 50;  // cap = factor * per_class_inversions
};

struct ScoreConfig {
  double odin_temperature = 1000.0;
  double odin_epsilon = 0.0014;
  double energy_temperature = 1.0;
  double cov_epsilon_scale = 1e-3;  // ridge = scale * trace(cov) / dim
};

struct IdxDataConfig {
  std::string train_images, train_labels, test_images, test_labels;
  std::string ood_images;
  std::size_t n_classes = 10;
  std::size_t train_limit = 0;  // 0 keeps everything
  std::size_t test_limit = 0;
  std::size_t ood_limit = 0;
  std::size_t downsample_factor = 1;  // 1 or 2
};

struct DataConfig {
  enum class Kind { synth, idx };
  Kind kind = Kind::synth;
  SynthSpec synth;
  IdxDataConfig idx;

  std::size_t n_classes() const {
    return kind == Kind::synth ? synth.n_classes : idx.n_classes;
  }
};

struct ExperimentConfig {
  RunMode mode = RunMode::tie;
  std::uint64_t seed = 1;
  DataConfig data;
  ModelConfig model;
  TieHyper tie;
  ScoreConfig scores;
};

// -------------------------------------------------------------- parsing --

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ConfigError("config: " + where + " must be an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (item.key() == a) {
        ok = true;
        break;
      }
    if (!ok)
      throw ConfigError("config: unknown key '" + item.key() + "' in " +
                        where);
  }
}

template <class T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline SynthSpec parse_synth_spec(const nlohmann::json& j) {
  detail::check_keys(j, "dataset.synth",
                     {"n_classes", "means", "stds", "train_per_class",
                      "test_per_class", "ood"});
  SynthSpec s;
  detail::maybe(j, "n_classes", s.n_classes);
  if (j.contains("means")) {
    s.means.clear();
    for (const auto& m : j.at("means")) {
      if (!m.is_array() || m.size() != 2)
        throw ConfigError("config: each synth mean must be [x, y]");
      s.means.push_back({m[0].get<double>(), m[1].get<double>()});
    }
  }
  detail::maybe(j, "stds", s.stds);
  detail::maybe(j, "train_per_class", s.train_per_class);
  detail::maybe(j, "test_per_class", s.test_per_class);
  if (j.contains("ood")) {
    const auto& o = j.at("ood");
    detail::check_keys(o, "dataset.synth.ood",
                       {"kind", "radius", "width", "half_extent", "count"});
    const std::string kind = o.value("kind", "ring");
    if (kind == "ring")
      s.ood.kind = OodGeometry::Kind::ring;
    else if (kind == "box")
      s.ood.kind = OodGeometry::Kind::box;
    else
      throw ConfigError("config: unknown ood kind '" + kind + "'");
    detail::maybe(o, "radius", s.ood.radius);
    detail::maybe(o, "width", s.ood.width);
    detail::maybe(o, "half_extent", s.ood.half_extent);
    detail::maybe(o, "count", s.ood.count);
  }
  return s;
}

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  detail::check_keys(j, "config root",
                     {"mode", "seed", "dataset", "model", "tie", "scores"});
  ExperimentConfig cfg;
  if (j.contains("mode")) cfg.mode = parse_run_mode(j.at("mode").get<std::string>());
  detail::maybe(j, "seed", cfg.seed);

  if (!j.contains("dataset"))
    throw ConfigError("config: missing required 'dataset' block");
  const auto& dj = j.at("dataset");
  detail::check_keys(
      dj, "dataset",
      {"kind", "synth", "train_images", "train_labels", "test_images",
       "test_labels", "ood_images", "n_classes", "train_limit", "test_limit",
       "ood_limit", "downsample_factor"});
  const std::string kind = dj.value("kind", "synth");
  if (kind == "synth") {
    cfg.data.kind = DataConfig::Kind::synth;
    if (dj.contains("synth")) cfg.data.synth = parse_synth_spec(dj.at("synth"));
  } else if (kind == "idx") {
    cfg.data.kind = DataConfig::Kind::idx;
    IdxDataConfig& x = cfg.data.idx;
    detail::maybe(dj, "train_images", x.train_images);
    detail::maybe(dj, "train_labels", x.train_labels);
    detail::maybe(dj, "test_images", x.test_images);
    detail::maybe(dj, "test_labels", x.test_labels);
    detail::maybe(dj, "ood_images", x.ood_images);
    detail::maybe(dj, "n_classes", x.n_classes);
    detail::maybe(dj, "train_limit", x.train_limit);
    detail::maybe(dj, "test_limit", x.test_limit);
    detail::maybe(dj, "ood_limit", x.ood_limit);
    detail::maybe(dj, "downsample_factor", x.downsample_factor);
    if (x.train_images.empty() || x.train_labels.empty() ||
        x.test_images.empty() || x.test_labels.empty())
      throw ConfigError("config: idx dataset needs train/test image and label paths");
    if (x.downsample_factor != 1 && x.downsample_factor != 2)
      throw ConfigError("config: downsample_factor must be 1 or 2");
    if (x.n_classes < 2) throw ConfigError("config: need at least 2 classes");
  } else {
    throw ConfigError("config: unknown dataset kind '" + kind + "'");
  }

  if (j.contains("model")) {
    const auto& mj = j.at("model");
    detail::check_keys(mj, "model",
                       {"classifier_hidden", "generator_hidden", "latent_dim"});
    detail::maybe(mj, "classifier_hidden", cfg.model.classifier_hidden);
    detail::maybe(mj, "generator_hidden", cfg.model.generator_hidden);
    detail::maybe(mj, "latent_dim", cfg.model.latent_dim);
    if (cfg.model.latent_dim == 0)
      throw ConfigError("config: latent_dim must be positive");
  }

  if (j.contains("tie")) {
    const auto& tj = j.at("tie");
    detail::check_keys(
        tj, "tie",
        {"epochs", "batch_size", "lr_classifier", "lr_generator", "lambda",
         "alpha", "beta", "gamma_start", "gamma_end", "sign_mode",
         "inversion_steps", "inversion_batch", "per_class_inversions",
         "garbage_init_count", "garbage_capacity_factor"});
    TieHyper& t = cfg.tie;
    detail::maybe(tj, "epochs", t.epochs);
    detail::maybe(tj, "batch_size", t.batch_size);
    detail::maybe(tj, "lr_classifier", t.lr_classifier);
    detail::maybe(tj, "lr_generator", t.lr_generator);
    detail::maybe(tj, "lambda", t.lambda);
    detail::maybe(tj, "alpha", t.alpha);
    detail::maybe(tj, "beta", t.beta);
    detail::maybe(tj, "gamma_start", t.gamma_start);
    detail::maybe(tj, "gamma_end", t.gamma_end);
    detail::maybe(tj, "sign_mode", t.sign_mode);
    detail::maybe(tj, "inversion_steps", t.inversion_steps);
    detail::maybe(tj, "inversion_batch", t.inversion_batch);
    detail::maybe(tj, "per_class_inversions", t.per_class_inversions);
    detail::maybe(tj, "garbage_init_count", t.garbage_init_count);
    detail::maybe(tj, "garbage_capacity_factor", t.garbage_capacity_factor);
    if (t.epochs < 1 || t.batch_size < 1)
      throw ConfigError("config: epochs and batch_size must be positive");
    if (!(t.lr_classifier > 0.0) || !(t.lr_generator > 0.0))
      throw ConfigError("config: learning rates must be positive");
    if (t.lambda < 0.0) throw ConfigError("config: lambda must be >= 0");
    if (t.sign_mode != -1 && t.sign_mode != 1)
      throw ConfigError("config: sign_mode must be -1 or +1");
    if (t.inversion_batch < 2)
      throw ConfigError("config: inversion_batch must be >= 2 (diversity term)");
  }

  if (j.contains("scores")) {
    const auto& sj = j.at("scores");
    detail::check_keys(sj, "scores",
                       {"odin_temperature", "odin_epsilon",
                        "energy_temperature", "cov_epsilon_scale"});
    detail::maybe(sj, "odin_temperature", cfg.scores.odin_temperature);
    detail::maybe(sj, "odin_epsilon", cfg.scores.odin_epsilon);
    detail::maybe(sj, "energy_temperature", cfg.scores.energy_temperature);
    detail::maybe(sj, "cov_epsilon_scale", cfg.scores.cov_epsilon_scale);
    if (!(cfg.scores.odin_temperature > 0.0) ||
        !(cfg.scores.energy_temperature > 0.0))
      throw ConfigError("config: score temperatures must be positive");
  }
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: cannot parse " + path + ": " + e.what());
  }
  return parse_experiment_config(j);
}

// -------------------------------------------------- resolved form + hash --

// full effective configuration, every default made explicit; nlohmann keeps
// object keys sorted, so dump() is canonical
inline nlohmann::json resolved_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["mode"] = to_string(cfg.mode);
  j["seed"] = cfg.seed;
  if (cfg.data.kind == DataConfig::Kind::synth) {
    const SynthSpec& s = cfg.data.synth;
    nlohmann::json means = nlohmann::json::array();
    for (const auto& m : s.means) means.push_back({m[0], m[1]});
    j["dataset"] = {
        {"kind", "synth"},
        {"synth",
         {{"n_classes", s.n_classes},
          {"means", means},
          {"stds", s.stds},
          {"train_per_class", s.train_per_class},
          {"test_per_class", s.test_per_class},
          {"ood",
           {{"kind", s.ood.kind == OodGeometry::Kind::ring ? "ring" : "box"},
            {"radius", s.ood.radius},
            {"width", s.ood.width},
            {"half_extent", s.ood.half_extent},
            {"count", s.ood.count}}}}}};
  } else {
    const IdxDataConfig& x = cfg.data.idx;
    j["dataset"] = {{"kind", "idx"},
                    {"train_images", x.train_images},
                    {"train_labels", x.train_labels},
                    {"test_images", x.test_images},
                    {"test_labels", x.test_labels},
                    {"ood_images", x.ood_images},
                    {"n_classes", x.n_classes},
                    {"train_limit", x.train_limit},
                    {"test_limit", x.test_limit},
                    {"ood_limit", x.ood_limit},
                    {"downsample_factor", x.downsample_factor}};
  }
  j["model"] = {{"classifier_hidden", cfg.model.classifier_hidden},
                {"generator_hidden", cfg.model.generator_hidden},
                {"latent_dim", cfg.model.latent_dim}};
  j["tie"] = {{"epochs", cfg.tie.epochs},
              {"batch_size", cfg.tie.batch_size},
              {"lr_classifier", cfg.tie.lr_classifier},
              {"lr_generator", cfg.tie.lr_generator},
              {"lambda", cfg.tie.lambda},
              {"alpha", cfg.tie.alpha},
              {"beta", cfg.tie.beta},
              {"gamma_start", cfg.tie.gamma_start},
              {"gamma_end", cfg.tie.gamma_end},
              {"sign_mode", cfg.tie.sign_mode},
              {"inversion_steps", cfg.tie.inversion_steps},
              {"inversion_batch", cfg.tie.inversion_batch},
              {"per_class_inversions", cfg.tie.per_class_inversions},
              {"garbage_init_count", cfg.tie.garbage_init_count},
              {"garbage_capacity_factor", cfg.tie.garbage_capacity_factor}};
  j["scores"] = {{"odin_temperature", cfg.scores.odin_temperature},
                 {"odin_epsilon", cfg.scores.odin_epsilon},
                 {"energy_temperature", cfg.scores.energy_temperature},
                 {"cov_epsilon_scale", cfg.scores.cov_epsilon_scale}};
  return j;
}

inline std::uint64_t fnv1a_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& cfg) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(
                    fnv1a_hash(resolved_json(cfg).dump())));
  return buf;
}

}  // namespace tie
