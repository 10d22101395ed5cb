#include "sparsegp/models.hpp"

#include "sparsegp/bounds.hpp"
#include "sparsegp/errors.hpp"
#include "sparsegp/random.hpp"
#include "sparsegp/solvegp.hpp"
#include "sparsegp/variational.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace sparsegp {

namespace {

struct NamedKind {
  ModelKind kind;
  const char* name;
};

constexpr NamedKind kKinds[] = {
    {ModelKind::Sgpr, "sgpr"},       {ModelKind::TSgpr, "t-sgpr"},
    {ModelKind::Svgp, "svgp"},       {ModelKind::TSvgp, "t-svgp"},
    {ModelKind::SolveGp, "solvegp"}, {ModelKind::TSolveGp, "t-solvegp"},
    {ModelKind::Gplvm, "gplvm"},     {ModelKind::TGplvm, "t-gplvm"},
};

double column_variance(const Matrix& y) {
  if (y.rows() < 2) return 1.0;
  const double mean = y.mean();
  const double v = (y.array() - mean).square().sum() / static_cast<double>(y.size());
  return v > 1e-12 ? v : 1.0;
}

ScalingMode scaling_for(ModelKind kind) { return is_tight(kind) ? ScalingMode::BetaShared : ScalingMode::Identity; }

SvgpState svgp_skeleton(const ModelConfig& config, const ParamVector& params) {
  SvgpState like;
  like.hyper.kernel.family = config.family;
  like.scaling.mode = scaling_for(config.kind);
  like.lik = config.lik;
  return unpack_svgp(params, like);
}

}  // namespace

std::string to_string(ModelKind kind) {
  for (const auto& k : kKinds)
    if (k.kind == kind) return k.name;
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
  for (const auto& k : kKinds)
    if (name == k.name) return k.kind;
  throw InputError("unknown objective '" + name + "'");
}

std::vector<std::string> model_names() {
  std::vector<std::string> out;
  for (const auto& k : kKinds) out.emplace_back(k.name);
  return out;
}

bool is_tight(ModelKind kind) {
  return kind == ModelKind::TSgpr || kind == ModelKind::TSvgp || kind == ModelKind::TSolveGp ||
         kind == ModelKind::TGplvm;
}

bool is_collapsed(ModelKind kind) { return kind == ModelKind::Sgpr || kind == ModelKind::TSgpr; }

bool is_gplvm(ModelKind kind) { return kind == ModelKind::Gplvm || kind == ModelKind::TGplvm; }

Hyperparams default_hyperparams(const Matrix& X, const Matrix& y, const ModelConfig& config) {
  const bool gaussian = config.lik.kind == LikelihoodKind::Gaussian;
  const double signal = gaussian ? column_variance(y) : 1.0;
  Vector ls(X.cols());
  for (Index j = 0; j < X.cols(); ++j) {
    const double sd = std::sqrt(column_variance(X.col(j)));
    ls(j) = sd > 1e-6 ? sd : 1.0;
  }
  if (!config.ard) ls = Vector::Constant(1, ls.size() ? ls.mean() : 1.0);
  Hyperparams h;
  h.kernel = config.family == KernelFamily::Matern32 ? Kernel::matern32(signal, ls)
                                                      : Kernel::squared_exponential(signal, ls);
  h.log_noise_variance = std::log(0.1 * signal);
  return h;
}

Model make_model(const ModelConfig& config, const Matrix& X, const Matrix& y) {
  Model out;
  const bool gaussian = config.lik.kind == LikelihoodKind::Gaussian;
  if (is_gplvm(config.kind)) {
    const GplvmScaling mode = is_tight(config.kind) ? GplvmScaling::PointwiseOptimal : GplvmScaling::Identity;
    GplvmInit gi;
    gi.latent_dim = config.latent_dim;
    gi.num_inducing = config.num_inducing;
    gi.family = config.family;
    gi.seed = config.seed;
    out.init = pack_gplvm(init_gplvm(y, mode, gi));
    out.objective = std::make_unique<GplvmObjective>(y, config.family, mode, config.mc_samples, config.seed);
    return out;
  }
  if (y.rows() != X.rows()) throw InputError("X and y have different row counts");
  const Hyperparams h = default_hyperparams(X, y, config);
  switch (config.kind) {
    case ModelKind::Sgpr:
    case ModelKind::TSgpr: {
      if (!gaussian) throw CapabilityError("collapsed bounds need a Gaussian likelihood; use svgp or t-svgp");
      const CollapsedKind kind = config.kind == ModelKind::Sgpr ? CollapsedKind::F1_Titsias : CollapsedKind::F4_Tight;
      out.init = pack_collapsed(kind, h, init_inducing(X, config.num_inducing, config.seed));
      out.objective = std::make_unique<CollapsedObjective>(kind, X, Vector(y.col(0)), config.family);
      break;
    }
    case ModelKind::Svgp:
    case ModelKind::TSvgp: {
      const ScalingMode mode = scaling_for(config.kind);
      out.init = pack_svgp(init_svgp(h, init_inducing(X, config.num_inducing, config.seed), config.lik, mode, X.rows()));
      out.objective = std::make_unique<SvgpObjective>(X, y, config.lik, config.family, mode);
      break;
    }
    case ModelKind::SolveGp:
    case ModelKind::TSolveGp: {
      if (config.num_inducing < 2) throw InputError("SOLVE-GP needs at least two inducing points");
      const Index mu = (config.num_inducing + 1) / 2;
      const Matrix z = init_inducing(X, config.num_inducing, config.seed);
      const ScalingMode mode = scaling_for(config.kind);
      out.init = pack_solvegp(init_solvegp(h, z.topRows(mu), z.bottomRows(config.num_inducing - mu), config.lik,
                                           mode, X.rows()));
      out.objective = std::make_unique<SolveGpObjective>(X, y, config.lik, config.family, mode);
      break;
    }
    default:
      break;
  }
  return out;
}

Prediction predict_model(const ModelConfig& config, const ParamVector& params, const Matrix& X_train,
                         const Matrix& y_train, const Matrix& Xstar, VarianceMode mode, Index full_cap) {
  if (is_gplvm(config.kind)) throw CapabilityError("GPLVM models have no input space to predict at");
  Prediction out;
  if (config.kind == ModelKind::SolveGp || config.kind == ModelKind::TSolveGp) {
    if (mode == VarianceMode::Full) {
      throw CapabilityError("the full variance mode is defined for sgpr/svgp models only; use simplified");
    }
    OrthState like;
    like.hyper.kernel.family = config.family;
    like.scaling.mode = scaling_for(config.kind);
    like.lik = config.lik;
    const OrthPrediction p = predict_solvegp(unpack_solvegp(params, like), Xstar);
    out.mean = p.mean;
    out.var = p.var;
    return out;
  }
  SvgpState state;
  if (is_collapsed(config.kind)) {
    state.hyper = read_hyperparams(params, config.family);
    state.Z = params.get(kInducing);
    state.lik = Likelihood::gaussian();
    state.qu = {optimal_qu(state.hyper, state.Z, X_train, Vector(y_train.col(0)))};
    state.scaling = config.kind == ModelKind::TSgpr ? ConditionalScaling::beta_shared(state.hyper.noise_variance())
                                                    : ConditionalScaling::identity();
  } else {
    state = svgp_skeleton(config, params);
  }
  const Index l = static_cast<Index>(state.qu.size());
  out.mean.resize(Xstar.rows(), l);
  out.var.resize(Xstar.rows(), l);
  PredictOptions opts;
  opts.full_cap = full_cap;
  for (Index i = 0; i < l; ++i) {
    opts.latent = i;
    const PredictiveDist p = predict(state, X_train, Xstar, mode, opts);
    out.mean.col(i) = p.mean;
    out.var.col(i) = p.var;
  }
  return out;
}

double noise_variance_of(const ParamVector& params) {
  return params.has(kLogNoise) ? std::exp(params.scalar(kLogNoise)) : 0.0;
}

Vector test_log_density(const ModelConfig& config, const Prediction& pred, const Matrix& y_test,
                        double noise_variance, int eval_samples) {
  if (pred.mean.rows() != y_test.rows()) throw InputError("test_log_density: row mismatch");
  Likelihood lik = config.lik;
  if (lik.kind == LikelihoodKind::Categorical) lik.mc_samples = eval_samples;
  Vector out(y_test.rows());
  for (Index i = 0; i < y_test.rows(); ++i) {
    out(i) = predictive_log_density(lik, pred.mean.row(i).transpose(), pred.var.row(i).transpose(), y_test(i, 0),
                                    noise_variance, static_cast<std::uint64_t>(i));
  }
  return out;
}

}  // namespace sparsegp
