#include <cmath>
#include <fstream>
#include <set>

#include "experiment/experiment.hpp"
#include "rulsurv/error.hpp"

namespace rulsurv::experiment {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) config_error("'" + where + "' must be an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& item : obj.items()) {
    if (!allowed.count(item.key())) config_error("unknown key '" + where + "." + item.key() + "'");
  }
}

template <class T>
void read(const json& obj, const char* key, const std::string& where, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    config_error("'" + where + "." + key + "' has the wrong type");
  }
}

void read_optional(const json& obj, const char* key, const std::string& where, std::optional<double>& out) {
  if (!obj.contains(key)) return;
  if (obj.at(key).is_null()) {
    out.reset();
    return;
  }
  double v = 0.0;
  read(obj, key, where, v);
  out = v;
}

std::string weighting_name(AucWeighting w) { return w == AucWeighting::Uniform ? "uniform" : "event_density"; }

}  // namespace

const char* to_string(DatasetSource source) noexcept {
  switch (source) {
    case DatasetSource::Toyota: return "toyota";
    case DatasetSource::Nasa: return "nasa";
    case DatasetSource::Synthetic: return "synthetic";
  }
  return "synthetic";
}

void ExperimentConfig::validate() const {
  if (models.empty()) config_error("at least one model is required");
  if (!(split.train > 0.0 && split.val > 0.0 && split.test > 0.0) ||
      std::abs(split.train + split.val + split.test - 1.0) > 1e-9) {
    config_error("split fractions must be positive and sum to 1");
  }
  if (depth < 1) config_error("depth must be at least 1");
  for (int d : sweep_depths) {
    if (d < 1) config_error("sweep depths must be at least 1");
  }
  for (std::size_t i = 0; i < sweep_fractions.size(); ++i) {
    const double f = sweep_fractions[i];
    if (!(f > 0.0 && f <= 1.0)) config_error("sweep fractions must lie in (0, 1]");
    if (i > 0 && !(f > sweep_fractions[i - 1])) config_error("sweep fractions must be sorted ascending");
  }
  if (source != DatasetSource::Synthetic && root.empty()) config_error("dataset.root is required for real data");
  if (source == DatasetSource::Synthetic) {
    if (synthetic.beta.size() != synthetic.dim) config_error("dataset.synthetic.beta must have 'dim' entries");
    if (!(synthetic.censor_rate >= 0.0 && synthetic.censor_rate < 1.0)) {
      config_error("dataset.synthetic.censor_rate must lie in [0,1)");
    }
  }
  if (settings.grid_size < 2) config_error("grid_size must be at least 2");
  if (eval.points < 2) config_error("eval_grid.points must be at least 2");
  try {
    raw.validate();
    nn::MlpSpec mlp = settings.mlp;
    mlp.input_dim = 1;  // set from the data at fit time
    mlp.validate();
    settings.train.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
}

ExperimentConfig parse_config(const json& doc) {
  ExperimentConfig c;
  allow_keys(doc, "config", {"dataset", "phase", "depth", "models", "split", "grid_size", "eval_grid",
                             "hyperparameters", "sweep", "output_dir", "dump_features"});
  if (doc.contains("dataset")) {
    const json& d = doc.at("dataset");
    allow_keys(d, "dataset", {"source", "root", "failure_threshold_fraction", "max_cycles_used",
                              "truncation_time_s", "reference_capacity_ah", "synthetic"});
    std::string source = "synthetic";
    read(d, "source", "dataset", source);
    if (source == "toyota") {
      c.source = DatasetSource::Toyota;
      c.raw = RawDatasetConfig::toyota();
    } else if (source == "nasa") {
      c.source = DatasetSource::Nasa;
      c.raw = RawDatasetConfig::nasa();
    } else if (source == "synthetic") {
      c.source = DatasetSource::Synthetic;
    } else {
      config_error("dataset.source must be toyota, nasa or synthetic");
    }
    std::string root;
    read(d, "root", "dataset", root);
    c.root = root;
    read(d, "failure_threshold_fraction", "dataset", c.raw.failure_threshold_fraction);
    read(d, "max_cycles_used", "dataset", c.raw.max_cycles_used);
    read_optional(d, "truncation_time_s", "dataset", c.raw.truncation_time_s);
    read_optional(d, "reference_capacity_ah", "dataset", c.raw.reference_capacity_ah);
    if (d.contains("synthetic")) {
      const json& s = d.at("synthetic");
      allow_keys(s, "dataset.synthetic", {"n", "dim", "beta", "censor_rate", "seed"});
      read(s, "n", "dataset.synthetic", c.synthetic.n);
      read(s, "dim", "dataset.synthetic", c.synthetic.dim);
      read(s, "beta", "dataset.synthetic", c.synthetic.beta);
      read(s, "censor_rate", "dataset.synthetic", c.synthetic.censor_rate);
      read(s, "seed", "dataset.synthetic", c.synthetic.seed);
    }
  }
  if (doc.contains("phase")) {
    std::string phase;
    read(doc, "phase", "config", phase);
    try {
      c.phase = parse_phase(phase);
    } catch (const Error&) {
      config_error("phase must be charge or discharge");
    }
  }
  read(doc, "depth", "config", c.depth);
  if (doc.contains("models")) {
    std::vector<std::string> names;
    read(doc, "models", "config", names);
    c.models.clear();
    for (const auto& n : names) c.models.push_back(parse_model_kind(n));
  }
  if (doc.contains("split")) {
    const json& s = doc.at("split");
    allow_keys(s, "split", {"train", "val", "test", "seed"});
    read(s, "train", "split", c.split.train);
    read(s, "val", "split", c.split.val);
    read(s, "test", "split", c.split.test);
    read(s, "seed", "split", c.seed);
  }
  read(doc, "grid_size", "config", c.settings.grid_size);
  if (doc.contains("eval_grid")) {
    const json& e = doc.at("eval_grid");
    allow_keys(e, "eval_grid", {"points", "lo_quantile", "hi_quantile", "auc_weighting", "ipcw_cap"});
    read(e, "points", "eval_grid", c.eval.points);
    read(e, "lo_quantile", "eval_grid", c.eval.lo_quantile);
    read(e, "hi_quantile", "eval_grid", c.eval.hi_quantile);
    read(e, "ipcw_cap", "eval_grid", c.eval.ipcw_cap);
    std::string w = weighting_name(c.eval.weighting);
    read(e, "auc_weighting", "eval_grid", w);
    if (w == "uniform") {
      c.eval.weighting = AucWeighting::Uniform;
    } else if (w == "event_density") {
      c.eval.weighting = AucWeighting::EventDensity;
    } else {
      config_error("eval_grid.auc_weighting must be event_density or uniform");
    }
  }
  if (doc.contains("hyperparameters")) {
    const json& h = doc.at("hyperparameters");
    allow_keys(h, "hyperparameters", {"cox", "network", "train", "epochs", "deephit", "mtlr"});
    auto& s = c.settings;
    if (h.contains("cox")) {
      const json& x = h.at("cox");
      allow_keys(x, "hyperparameters.cox", {"ridge", "max_iterations", "tolerance"});
      read(x, "ridge", "hyperparameters.cox", s.linear.ridge);
      read(x, "max_iterations", "hyperparameters.cox", s.linear.max_iterations);
      read(x, "tolerance", "hyperparameters.cox", s.linear.tolerance);
    }
    if (h.contains("network")) {
      const json& x = h.at("network");
      allow_keys(x, "hyperparameters.network", {"hidden", "batch_norm", "dropout"});
      read(x, "hidden", "hyperparameters.network", s.mlp.hidden);
      read(x, "batch_norm", "hyperparameters.network", s.mlp.batch_norm);
      read(x, "dropout", "hyperparameters.network", s.mlp.dropout);
    }
    if (h.contains("train")) {
      const json& x = h.at("train");
      allow_keys(x, "hyperparameters.train", {"learning_rate", "batch_size", "patience", "l2_penalty"});
      read(x, "learning_rate", "hyperparameters.train", s.train.learning_rate);
      read(x, "batch_size", "hyperparameters.train", s.train.batch_size);
      read(x, "patience", "hyperparameters.train", s.train.patience);
      read(x, "l2_penalty", "hyperparameters.train", s.train.l2_penalty);
    }
    if (h.contains("epochs")) {
      const json& x = h.at("epochs");
      allow_keys(x, "hyperparameters.epochs", {"cox_nets", "deephit", "mtlr"});
      read(x, "cox_nets", "hyperparameters.epochs", s.epochs_cox);
      read(x, "deephit", "hyperparameters.epochs", s.epochs_deephit);
      read(x, "mtlr", "hyperparameters.epochs", s.epochs_mtlr);
    }
    if (h.contains("deephit")) {
      const json& x = h.at("deephit");
      allow_keys(x, "hyperparameters.deephit", {"alpha", "sigma"});
      read(x, "alpha", "hyperparameters.deephit", s.deephit_alpha);
      read(x, "sigma", "hyperparameters.deephit", s.deephit_sigma);
    }
    if (h.contains("mtlr")) {
      const json& x = h.at("mtlr");
      allow_keys(x, "hyperparameters.mtlr", {"lambda1", "lambda2"});
      read(x, "lambda1", "hyperparameters.mtlr", s.mtlr_lambda1);
      read(x, "lambda2", "hyperparameters.mtlr", s.mtlr_lambda2);
    }
  }
  if (doc.contains("sweep")) {
    const json& s = doc.at("sweep");
    allow_keys(s, "sweep", {"depths", "fractions"});
    read(s, "depths", "sweep", c.sweep_depths);
    read(s, "fractions", "sweep", c.sweep_fractions);
  }
  if (doc.contains("output_dir")) {
    std::string out;
    read(doc, "output_dir", "config", out);
    c.output_dir = out;
  }
  read(doc, "dump_features", "config", c.dump_features);
  c.settings.train.seed = c.seed;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) config_error("cannot open config file '" + path.string() + "'");
  json doc;
  try {
    is >> doc;
  } catch (const json::exception& e) {
    config_error("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& c) {
  json models = json::array();
  for (auto m : c.models) models.push_back(to_string(m));
  const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  const auto& s = c.settings;
  return json{
      {"dataset",
       {{"source", to_string(c.source)},
        {"root", c.root.string()},
        {"failure_threshold_fraction", c.raw.failure_threshold_fraction},
        {"max_cycles_used", c.raw.max_cycles_used},
        {"truncation_time_s", opt(c.raw.truncation_time_s)},
        {"reference_capacity_ah", opt(c.raw.reference_capacity_ah)},
        {"synthetic",
         {{"n", c.synthetic.n},
          {"dim", c.synthetic.dim},
          {"beta", c.synthetic.beta},
          {"censor_rate", c.synthetic.censor_rate},
          {"seed", c.synthetic.seed}}}}},
      {"phase", to_string(c.phase)},
      {"depth", c.depth},
      {"models", models},
      {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}, {"seed", c.seed}}},
      {"grid_size", s.grid_size},
      {"eval_grid",
       {{"points", c.eval.points},
        {"lo_quantile", c.eval.lo_quantile},
        {"hi_quantile", c.eval.hi_quantile},
        {"auc_weighting", weighting_name(c.eval.weighting)},
        {"ipcw_cap", c.eval.ipcw_cap}}},
      {"hyperparameters",
       {{"cox",
         {{"ridge", s.linear.ridge}, {"max_iterations", s.linear.max_iterations}, {"tolerance", s.linear.tolerance}}},
        {"network", {{"hidden", s.mlp.hidden}, {"batch_norm", s.mlp.batch_norm}, {"dropout", s.mlp.dropout}}},
        {"train",
         {{"learning_rate", s.train.learning_rate},
          {"batch_size", s.train.batch_size},
          {"patience", s.train.patience},
          {"l2_penalty", s.train.l2_penalty}}},
        {"epochs", {{"cox_nets", s.epochs_cox}, {"deephit", s.epochs_deephit}, {"mtlr", s.epochs_mtlr}}},
        {"deephit", {{"alpha", s.deephit_alpha}, {"sigma", s.deephit_sigma}}},
        {"mtlr", {{"lambda1", s.mtlr_lambda1}, {"lambda2", s.mtlr_lambda2}}}}},
      {"sweep", {{"depths", c.sweep_depths}, {"fractions", c.sweep_fractions}}},
      {"output_dir", c.output_dir.string()},
      {"dump_features", c.dump_features},
  };
}

}  // namespace rulsurv::experiment
