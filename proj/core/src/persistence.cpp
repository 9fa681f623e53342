#include "rulsurv/persistence.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "rulsurv/error.hpp"
#include "rulsurv/text.hpp"

namespace rulsurv {

namespace {

constexpr const char* kMagic = "rulsurv-model";
constexpr int kVersion = 1;

void write_values(std::ostream& os, const char* key, const std::vector<double>& v) {
  os << key << ' ' << v.size();
  for (double x : v) os << ' ' << format_double(x);
  os << '\n';
}

void write_scalar(std::ostream& os, const char* key, double v) { os << key << ' ' << format_double(v) << '\n'; }

void write_step(std::ostream& os, const StepFunction& f) {
  write_values(os, "baseline_times", f.times);
  write_values(os, "baseline_values", f.values);
}

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  std::string token() {
    std::string tok;
    if (!(is_ >> tok)) throw Error(ErrorCode::FormatError, "truncated model file");
    return tok;
  }

  void key(const char* expected) {
    const auto tok = token();
    if (tok != expected) {
      throw Error(ErrorCode::FormatError, "model file: expected '" + std::string(expected) + "', found '" + tok + "'");
    }
  }

  double number() {
    const auto v = parse_double(token());
    if (!v) throw Error(ErrorCode::FormatError, "model file: bad number");
    return *v;
  }

  std::size_t count() {
    const auto v = parse_int(token());
    if (!v || *v < 0) throw Error(ErrorCode::FormatError, "model file: bad count");
    return static_cast<std::size_t>(*v);
  }

  double scalar(const char* k) {
    key(k);
    return number();
  }

  std::vector<double> values(const char* k) {
    key(k);
    std::vector<double> v(count());
    for (double& x : v) x = number();
    return v;
  }

  StepFunction step() {
    StepFunction f;
    f.times = values("baseline_times");
    f.values = values("baseline_values");
    if (f.times.size() != f.values.size()) throw Error(ErrorCode::FormatError, "model file: baseline arrays differ");
    return f;
  }

  TimeGrid grid() { return TimeGrid(values("grid")); }

  nn::Network network() { return nn::Network::load(is_); }

 private:
  std::istream& is_;
};

}  // namespace

void save_model(std::ostream& os, const FittedModel& model) {
  const ModelKind kind = kind_of(model);
  os << kMagic << ' ' << kVersion << '\n' << "kind " << to_string(kind) << '\n';
  if (const auto* m = std::get_if<LinearCox>(&model)) {
    write_scalar(os, "ridge", m->ridge);
    write_values(os, "beta", m->beta);
    write_step(os, m->baseline);
  } else if (const auto* m = std::get_if<NeuralCoxPH>(&model)) {
    write_step(os, m->baseline);
    m->net.save(os);
  } else if (const auto* m = std::get_if<CoxTime>(&model)) {
    write_values(os, "grid", m->grid.points());
    write_values(os, "increments", m->baseline_increments);
    write_scalar(os, "time_mean", m->time_mean);
    write_scalar(os, "time_scale", m->time_scale);
    os << "use_time " << (m->use_time ? 1 : 0) << '\n';
    m->net.save(os);
  } else if (const auto* m = std::get_if<DeepHit>(&model)) {
    write_values(os, "grid", m->grid.points());
    write_scalar(os, "alpha", m->alpha);
    write_scalar(os, "sigma", m->sigma);
    m->net.save(os);
  } else if (const auto* m = std::get_if<Mtlr>(&model)) {
    write_values(os, "grid", m->grid.points());
    write_scalar(os, "lambda1", m->lambda1);
    write_scalar(os, "lambda2", m->lambda2);
    m->net.save(os);
  }
  os << "end\n";
}

FittedModel load_model(std::istream& is) {
  Reader in(is);
  in.key(kMagic);
  if (in.count() != kVersion) throw Error(ErrorCode::FormatError, "unsupported model file version");
  in.key("kind");
  const std::string name = in.token();
  ModelKind kind;
  try {
    kind = parse_model_kind(name);
  } catch (const Error&) {
    throw Error(ErrorCode::FormatError, "model file: unknown kind '" + name + "'");
  }
  FittedModel model;
  switch (kind) {
    case ModelKind::LinearCox: {
      LinearCox m;
      m.ridge = in.scalar("ridge");
      m.beta = in.values("beta");
      m.baseline = in.step();
      model = std::move(m);
      break;
    }
    case ModelKind::CoxPH: {
      NeuralCoxPH m;
      m.baseline = in.step();
      m.net = in.network();
      model = std::move(m);
      break;
    }
    case ModelKind::CoxTime: {
      TimeGrid grid = in.grid();
      auto increments = in.values("increments");
      const double mean = in.scalar("time_mean");
      const double scale = in.scalar("time_scale");
      in.key("use_time");
      const bool use_time = in.count() == 1;
      if (increments.size() != grid.size()) throw Error(ErrorCode::FormatError, "model file: increments mismatch grid");
      model = CoxTime{in.network(), std::move(grid), std::move(increments), mean, scale, use_time};
      break;
    }
    case ModelKind::DeepHit: {
      TimeGrid grid = in.grid();
      const double alpha = in.scalar("alpha");
      const double sigma = in.scalar("sigma");
      model = DeepHit{in.network(), std::move(grid), alpha, sigma};
      break;
    }
    case ModelKind::Mtlr: {
      TimeGrid grid = in.grid();
      const double l1 = in.scalar("lambda1");
      const double l2 = in.scalar("lambda2");
      model = Mtlr{in.network(), std::move(grid), l1, l2};
      break;
    }
  }
  in.key("end");
  return model;
}

void save_model_file(const std::string& path, const FittedModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::MissingFile, "cannot write model file '" + path + "'");
  save_model(os, model);
  if (!os) throw Error(ErrorCode::MissingFile, "failed writing model file '" + path + "'");
}

FittedModel load_model_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::MissingFile, "cannot open model file '" + path + "'");
  return load_model(is);
}

}  // namespace rulsurv
