#include "fedse/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fedse/digest.hpp"
#include "fedse/errors.hpp"
#include "fedse/rng.hpp"

namespace fedse::nn {

namespace {

void check_pair_shape(const LoraPair& pair, std::size_t rank) {
  if (pair.a.rows() != rank || pair.b.cols() != rank)
    throw ContractViolation("LoraPair: a.rows and b.cols must equal rank");
}

// Activations of one forward pass, kept for the backward pass.
struct LayerTrace {
  std::vector<double> input;   // x fed to the layer
  std::vector<double> down;    // A·x
  std::vector<double> output;  // tanh(z) for hidden layers, logits for the last
};

std::vector<LayerTrace> forward_trace(const BaseModel& base, const LoraAdapter& adapter,
                                      std::span<const double> features) {
  if (features.size() != base.input_dim())
    throw ContractViolation("forward: feature dimension " + std::to_string(features.size()) +
                            " != input_dim " + std::to_string(base.input_dim()));
  const auto& layers = base.layers();
  const double scale = adapter.scale();
  std::vector<LayerTrace> trace(layers.size());
  std::span<const double> x = features;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const DenseLayer& layer = layers[l];
    const LoraPair& lora = adapter.layers()[l];
    LayerTrace& t = trace[l];
    t.input.assign(x.begin(), x.end());
    t.down.assign(adapter.rank(), 0.0);
    multiply_add(lora.a, t.input, t.down);
    t.output = layer.bias;
    multiply_add(layer.weight, t.input, t.output);
    std::vector<double> up(layer.weight.rows(), 0.0);
    multiply_add(lora.b, t.down, up);
    for (std::size_t i = 0; i < up.size(); ++i) t.output[i] += scale * up[i];
    if (l + 1 < layers.size())
      for (double& v : t.output) v = std::tanh(v);
    x = t.output;
  }
  return trace;
}

// log π(action) under a masked softmax, via log-sum-exp.
double masked_log_prob(std::span<const double> logits, const ActionMask& mask, ActionId action) {
  if (mask.size() != logits.size()) throw ContractViolation("mask size != action vocabulary size");
  if (action >= logits.size() || !mask[action])
    throw ContractViolation("chosen action " + std::to_string(action) +
                            " has zero probability under its mask");
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) max_logit = std::max(max_logit, logits[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) sum += std::exp(logits[i] - max_logit);
  const double lp = logits[action] - max_logit - std::log(sum);
  if (!std::isfinite(lp)) throw NumericalError("non-finite log-probability");
  return lp;
}

void validate_batch(TrajectoryBatch batch) {
  if (batch.empty()) throw ContractViolation("nll_loss: empty batch");
}

std::vector<const Trajectory*> as_pointers(std::span<const Trajectory> batch) {
  std::vector<const Trajectory*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& t : batch) ptrs.push_back(&t);
  return ptrs;
}

}  // namespace

// --- BaseModel -------------------------------------------------------------

BaseModel::BaseModel(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ContractViolation("BaseModel: no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.size() != layer.weight.rows())
      throw ContractViolation("BaseModel: bias size mismatch at layer " + std::to_string(l));
    if (l > 0 && layer.weight.cols() != layers_[l - 1].weight.rows())
      throw ContractViolation("BaseModel: layer " + std::to_string(l) + " input mismatch");
    if (!layer.weight.all_finite()) throw NumericalError("BaseModel: non-finite weights");
  }
}

std::vector<LayerShape> BaseModel::schema() const {
  std::vector<LayerShape> s;
  for (const auto& layer : layers_) s.push_back({layer.weight.rows(), layer.weight.cols()});
  return s;
}

std::uint64_t BaseModel::content_hash() const {
  Fnv1a64 h;
  for (const auto& layer : layers_) {
    h.u64(layer.weight.rows()).u64(layer.weight.cols());
    for (double v : layer.weight.data()) h.f64(v);
    for (double v : layer.bias) h.f64(v);
  }
  return h.value();
}

// --- LoraAdapter -----------------------------------------------------------

LoraAdapter::LoraAdapter(std::size_t rank, double alpha, std::vector<LoraPair> layers)
    : rank_(rank), alpha_(alpha), layers_(std::move(layers)) {
  if (rank_ < 1) throw ContractViolation("LoraAdapter: rank must be >= 1");
  if (!(alpha_ > 0.0)) throw ContractViolation("LoraAdapter: alpha must be positive");
  for (const auto& pair : layers_) check_pair_shape(pair, rank_);
}

LoraAdapter LoraAdapter::zeros(std::span<const LayerShape> schema, std::size_t rank,
                               double alpha) {
  std::vector<LoraPair> layers;
  for (const auto& s : schema) layers.push_back({Matrix(rank, s.d_in), Matrix(s.d_out, rank)});
  return LoraAdapter(rank, alpha, std::move(layers));
}

std::vector<LayerShape> LoraAdapter::schema() const {
  std::vector<LayerShape> s;
  for (const auto& p : layers_) s.push_back({p.b.rows(), p.a.cols()});
  return s;
}

bool LoraAdapter::same_schema(const LoraAdapter& o) const {
  return rank_ == o.rank_ && alpha_ == o.alpha_ && schema() == o.schema();
}

std::size_t LoraAdapter::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : layers_) n += p.a.size() + p.b.size();
  return n;
}

AdapterGradients AdapterGradients::zeros_like(const LoraAdapter& adapter) {
  AdapterGradients g;
  for (const auto& p : adapter.layers())
    g.layers.push_back({Matrix(p.a.rows(), p.a.cols()), Matrix(p.b.rows(), p.b.cols())});
  return g;
}

bool AdapterGradients::all_finite() const {
  return std::all_of(layers.begin(), layers.end(),
                     [](const LoraPair& p) { return p.a.all_finite() && p.b.all_finite(); });
}

// --- PolicyNet -------------------------------------------------------------

PolicyNet::PolicyNet(std::shared_ptr<const BaseModel> base, LoraAdapter adapter)
    : base_(std::move(base)) {
  if (!base_) throw ContractViolation("PolicyNet: null base");
  set_adapter(std::move(adapter));
}

void PolicyNet::set_adapter(LoraAdapter adapter) {
  if (adapter.schema() != base_->schema())
    throw ContractViolation("PolicyNet: adapter schema does not match base architecture");
  adapter_ = std::move(adapter);
}

std::vector<double> PolicyNet::logits(std::span<const double> features) const {
  auto trace = forward_trace(*base_, adapter_, features);
  return std::move(trace.back().output);
}

std::vector<double> PolicyNet::forward(std::span<const double> features, const ActionMask& mask,
                                       double temperature) const {
  return masked_softmax(logits(features), mask, temperature);
}

std::vector<double> lora_linear_forward(std::span<const double> x, const DenseLayer& layer,
                                        const LoraPair& lora, double scale) {
  if (x.size() != layer.weight.cols() || x.size() != lora.a.cols() ||
      lora.b.rows() != layer.weight.rows() || lora.a.rows() != lora.b.cols() ||
      layer.bias.size() != layer.weight.rows())
    throw ContractViolation("lora_linear_forward: dimension mismatch");
  std::vector<double> down(lora.a.rows(), 0.0);
  multiply_add(lora.a, x, down);
  std::vector<double> up(lora.b.rows(), 0.0);
  multiply_add(lora.b, down, up);
  std::vector<double> y = layer.bias;
  multiply_add(layer.weight, x, y);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += scale * up[i];
  return y;
}

std::vector<double> masked_softmax(std::span<const double> logits, const ActionMask& mask,
                                   double temperature) {
  if (mask.size() != logits.size()) throw ContractViolation("masked_softmax: mask size mismatch");
  if (!(temperature > 0.0)) throw ContractViolation("masked_softmax: temperature must be > 0");
  double max_logit = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) {
      any = true;
      max_logit = std::max(max_logit, logits[i]);
    }
  if (!any) throw ContractViolation("masked_softmax: no legal action");
  std::vector<double> p(logits.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) {
      p[i] = std::exp((logits[i] - max_logit) / temperature);
      sum += p[i];
    }
  for (double& v : p) v /= sum;
  return p;
}

// --- loss and gradient -----------------------------------------------------

double nll_loss(const PolicyNet& net, TrajectoryBatch batch) {
  validate_batch(batch);
  double total = 0.0;
  for (const Trajectory* traj : batch)
    for (const Step& step : traj->steps)
      total -= masked_log_prob(net.logits(step.features), step.mask, step.action);
  return total / static_cast<double>(batch.size());
}

double nll_loss(const PolicyNet& net, std::span<const Trajectory> batch) {
  const auto ptrs = as_pointers(batch);
  return nll_loss(net, ptrs);
}

LossAndGradients backward_adapter(const PolicyNet& net, TrajectoryBatch batch) {
  validate_batch(batch);
  const BaseModel& base = net.base();
  const LoraAdapter& adapter = net.adapter();
  const auto& layers = base.layers();
  const double scale = adapter.scale();

  LossAndGradients out{0.0, AdapterGradients::zeros_like(adapter)};
  std::vector<double> v(adapter.rank());
  for (const Trajectory* traj : batch) {
    for (const Step& step : traj->steps) {
      const auto trace = forward_trace(base, adapter, step.features);
      const auto& logits = trace.back().output;
      out.loss -= masked_log_prob(logits, step.mask, step.action);

      // d(−log p_a)/d logits = p − onehot(a); masked entries stay 0.
      std::vector<double> g = masked_softmax(logits, step.mask);
      g[step.action] -= 1.0;

      for (std::size_t l = layers.size(); l-- > 0;) {
        const LayerTrace& t = trace[l];
        const LoraPair& lora = adapter.layers()[l];
        LoraPair& grad = out.grads.layers[l];

        add_outer(grad.b, scale, g, t.down);
        std::fill(v.begin(), v.end(), 0.0);
        multiply_transposed_add(lora.b, g, v);
        add_outer(grad.a, scale, v, t.input);
        if (l == 0) break;

        std::vector<double> dx(t.input.size(), 0.0);
        multiply_transposed_add(layers[l].weight, g, dx);
        std::vector<double> av(t.input.size(), 0.0);
        multiply_transposed_add(lora.a, v, av);
        // t.input is the previous layer's tanh output h; dtanh = 1 − h².
        for (std::size_t i = 0; i < dx.size(); ++i)
          dx[i] = (dx[i] + scale * av[i]) * (1.0 - t.input[i] * t.input[i]);
        g = std::move(dx);
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  for (auto& pair : out.grads.layers) {
    for (double& x : pair.a.data()) x *= inv;
    for (double& x : pair.b.data()) x *= inv;
  }
  return out;
}

LossAndGradients backward_adapter(const PolicyNet& net, std::span<const Trajectory> batch) {
  const auto ptrs = as_pointers(batch);
  return backward_adapter(net, ptrs);
}

// --- optimizer -------------------------------------------------------------

void optimizer_step(LoraAdapter& adapter, const AdapterGradients& grads, OptimizerState& state,
                    double lr) {
  if (grads.layers.size() != adapter.layers().size())
    throw ContractViolation("optimizer_step: gradient schema mismatch");
  for (std::size_t l = 0; l < grads.layers.size(); ++l)
    if (!grads.layers[l].a.same_shape(adapter.layers()[l].a) ||
        !grads.layers[l].b.same_shape(adapter.layers()[l].b))
      throw ContractViolation("optimizer_step: gradient shape mismatch");
  if (!grads.all_finite()) throw NumericalError("optimizer_step: non-finite gradient");

  auto apply = [&](Matrix& param, const Matrix& grad, Matrix* velocity) {
    auto p = param.data();
    auto g = grad.data();
    if (velocity == nullptr) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
      return;
    }
    auto vel = velocity->data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      vel[i] = state.momentum * vel[i] + g[i];
      p[i] -= lr * vel[i];
    }
  };

  const bool use_momentum = state.momentum != 0.0;
  if (use_momentum && state.velocity.layers.empty())
    state.velocity = AdapterGradients::zeros_like(adapter);
  for (std::size_t l = 0; l < grads.layers.size(); ++l) {
    auto& pair = adapter.layers()[l];
    apply(pair.a, grads.layers[l].a, use_momentum ? &state.velocity.layers[l].a : nullptr);
    apply(pair.b, grads.layers[l].b, use_momentum ? &state.velocity.layers[l].b : nullptr);
  }
}

LoraAdapter init_adapter(std::span<const LayerShape> schema, std::size_t rank, double alpha,
                         std::uint64_t seed) {
  if (rank < 1) throw ContractViolation("init_adapter: rank must be >= 1");
  LoraAdapter adapter = LoraAdapter::zeros(schema, rank, alpha);
  Rng rng(seed);
  for (auto& pair : adapter.layers())
    for (double& v : pair.a.data()) v = rng.normal(0.0, kLoraInitStd);
  return adapter;
}

}  // namespace fedse::nn
