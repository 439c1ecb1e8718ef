#include "lse/model.hpp"

#include <cmath>

#include "lse/rng.hpp"

namespace lse::model {

namespace {

template <typename Real>
ad::Var<Real> uniform_param(Shape shape, double bound, Rng& rng) {
  Tensor<Real> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<Real>(rng.uniform(-bound, bound));
  return ad::parameter(std::move(t));
}

template <typename Real>
ad::Var<Real> filled_param(Shape shape, double value) {
  return ad::parameter(Tensor<Real>(std::move(shape), static_cast<Real>(value)));
}

}  // namespace

template <typename Real>
LseModel<Real>::LseModel(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  std::uint64_t stream = 0;
  auto next_rng = [&] { return Rng(seed, stream++); };
  const std::size_t C = cfg_.channels;
  const std::size_t F = cfg_.conv_features;
  const std::size_t L = cfg_.kernel;

  // Conv weights: (out, in, L); transposed conv weights: (in, out, L).
  // Bound sqrt(1 / fan_in) with fan_in = in * L in both cases.
  const std::size_t enc_io[3][2] = {{C, F}, {F, F}, {F, C}};
  for (int l = 0; l < 3; ++l) {
    const auto [in, out] = std::pair{enc_io[l][0], enc_io[l][1]};
    const double bound = std::sqrt(1.0 / static_cast<double>(in * L));
    auto rng = next_rng();
    enc_[l].weight = uniform_param<Real>({out, in, L}, bound, rng);
    enc_[l].bias = uniform_param<Real>({out}, bound, rng);
  }
  for (int l = 0; l < 3; ++l) {
    const auto [in, out] = std::pair{enc_io[l][0], enc_io[l][1]};
    const double bound = std::sqrt(1.0 / static_cast<double>(in * L));
    auto rng = next_rng();
    dec_[l].weight = uniform_param<Real>({in, out, L}, bound, rng);
    dec_[l].bias = uniform_param<Real>({out}, bound, rng);
  }
  for (auto* bn : {&enc_bn_[0], &enc_bn_[1], &dec_bn_[0], &dec_bn_[1]}) {
    bn->scale = filled_param<Real>({F}, 1.0);
    bn->shift = filled_param<Real>({F}, 0.0);
    bn->stats = ad::BatchNormStats<Real>(F);
  }

  auto make_lif = [&](std::size_t in, std::size_t out) {
    auto rng = next_rng();
    return Lif{uniform_param<Real>({out, in}, std::sqrt(1.0 / static_cast<double>(in)), rng),
               filled_param<Real>({out}, cfg_.beta_init),
               filled_param<Real>({out}, cfg_.theta_init)};
  };
  snn_in_ = make_lif(C, cfg_.snn_input);
  snn_hidden_ = make_lif(cfg_.snn_input, cfg_.snn_hidden);
  head_freq_ = make_lif(cfg_.snn_hidden, cfg_.outputs);
  head_amp_ = make_lif(cfg_.snn_hidden, cfg_.outputs);
}

template <typename Real>
ad::Var<Real> LseModel<Real>::encode(const ad::Var<Real>& x, ad::Mode mode) {
  const auto mom = static_cast<Real>(cfg_.bn_momentum);
  const auto eps = static_cast<Real>(cfg_.bn_eps);
  auto h = x;
  for (int l = 0; l < 2; ++l) {
    h = ad::conv1d(h, enc_[l].weight, enc_[l].bias);
    h = ad::batchnorm1d(h, enc_bn_[l].scale, enc_bn_[l].shift, enc_bn_[l].stats, mode, mom, eps);
    h = ad::tanh(h);
  }
  return ad::conv1d(h, enc_[2].weight, enc_[2].bias);
}

template <typename Real>
ad::Var<Real> LseModel<Real>::spike_encode(const ad::Var<Real>& features) const {
  return ad::spike_threshold_ste(features, static_cast<Real>(cfg_.tau));
}

template <typename Real>
ad::Var<Real> LseModel<Real>::decode(const ad::Var<Real>& spikes, ad::Mode mode) {
  const auto mom = static_cast<Real>(cfg_.bn_momentum);
  const auto eps = static_cast<Real>(cfg_.bn_eps);
  auto h = spikes;
  for (int l = 0; l < 2; ++l) {
    h = ad::conv1d_transpose(h, dec_[l].weight, dec_[l].bias);
    h = ad::batchnorm1d(h, dec_bn_[l].scale, dec_bn_[l].shift, dec_bn_[l].stats, mode, mom, eps);
    h = ad::tanh(h);
  }
  return ad::sigmoid(ad::conv1d_transpose(h, dec_[2].weight, dec_[2].bias));
}

template <typename Real>
std::pair<ad::Var<Real>, ad::Var<Real>> LseModel<Real>::snn(
    const ad::Var<Real>& spikes) const {
  if (spikes->value.rank() != 3 || spikes->value.dim(1) != cfg_.channels)
    throw StructuralError("snn: expected (N, " + std::to_string(cfg_.channels) +
                          ", K) spikes, got " + shape_str(spikes->shape()));
  const std::size_t N = spikes->value.dim(0);
  const std::size_t K = spikes->value.dim(2);
  const auto alpha = static_cast<Real>(cfg_.surrogate_alpha);

  auto l1 = ad::lif_initial_state<Real>(N, cfg_.snn_input);
  auto l2 = ad::lif_initial_state<Real>(N, cfg_.snn_hidden);
  // Output heads integrate but never fire, so their reset input stays zero.
  auto silent = ad::constant(Tensor<Real>(Shape{N, cfg_.outputs}));
  ad::Var<Real> u_freq = silent;
  ad::Var<Real> u_amp = silent;
  for (std::size_t k = 0; k < K; ++k) {
    auto z = ad::time_slice(spikes, k);
    l1 = ad::lif_step(l1, z, snn_in_.weight, snn_in_.beta, snn_in_.theta, alpha);
    l2 = ad::lif_step(l2, l1.s, snn_hidden_.weight, snn_hidden_.beta, snn_hidden_.theta, alpha);
    u_freq = ad::lif_membrane(u_freq, silent, ad::linear(l2.s, head_freq_.weight),
                              head_freq_.beta, head_freq_.theta);
    u_amp = ad::lif_membrane(u_amp, silent, ad::linear(l2.s, head_amp_.weight),
                             head_amp_.beta, head_amp_.theta);
  }
  return {ad::sigmoid(u_freq), ad::sigmoid(u_amp)};
}

template <typename Real>
ForwardResult<Real> LseModel<Real>::forward(const ad::Var<Real>& x, ad::Mode mode) {
  const Shape expected{x->value.rank() == 3 ? x->value.dim(0) : 0, cfg_.channels,
                       cfg_.window_length};
  require_shape(x->value, expected, "LseModel::forward input");
  ForwardResult<Real> r;
  r.features = encode(x, mode);
  r.spikes = spike_encode(r.features);
  r.reconstruction = decode(r.spikes, mode);
  std::tie(r.freq, r.amp) = snn(r.spikes);
  return r;
}

template <typename Real>
std::vector<std::pair<std::string, ad::Var<Real>>> LseModel<Real>::named_parameters() const {
  std::vector<std::pair<std::string, ad::Var<Real>>> out;
  for (int l = 0; l < 3; ++l) {
    const std::string p = "encoder.conv" + std::to_string(l + 1);
    out.emplace_back(p + ".weight", enc_[l].weight);
    out.emplace_back(p + ".bias", enc_[l].bias);
    if (l < 2) {
      const std::string b = "encoder.bn" + std::to_string(l + 1);
      out.emplace_back(b + ".scale", enc_bn_[l].scale);
      out.emplace_back(b + ".shift", enc_bn_[l].shift);
    }
  }
  for (int l = 0; l < 3; ++l) {
    const std::string p = "decoder.deconv" + std::to_string(l + 1);
    out.emplace_back(p + ".weight", dec_[l].weight);
    out.emplace_back(p + ".bias", dec_[l].bias);
    if (l < 2) {
      const std::string b = "decoder.bn" + std::to_string(l + 1);
      out.emplace_back(b + ".scale", dec_bn_[l].scale);
      out.emplace_back(b + ".shift", dec_bn_[l].shift);
    }
  }
  const std::pair<const char*, const Lif*> lifs[] = {{"snn.input", &snn_in_},
                                                     {"snn.hidden", &snn_hidden_},
                                                     {"snn.head_freq", &head_freq_},
                                                     {"snn.head_amp", &head_amp_}};
  for (const auto& [name, lif] : lifs) {
    const std::string p(name);
    out.emplace_back(p + ".weight", lif->weight);
    out.emplace_back(p + ".beta", lif->beta);
    out.emplace_back(p + ".theta", lif->theta);
  }
  return out;
}

template <typename Real>
std::vector<ad::Var<Real>> LseModel<Real>::parameters() const {
  std::vector<ad::Var<Real>> out;
  for (auto& [_, v] : named_parameters()) out.push_back(v);
  return out;
}

template <typename Real>
std::vector<std::pair<std::string, Tensor<Real>*>> LseModel<Real>::named_buffers() {
  std::vector<std::pair<std::string, Tensor<Real>*>> out;
  const std::pair<std::string, BatchNorm*> bns[] = {{"encoder.bn1", &enc_bn_[0]},
                                                    {"encoder.bn2", &enc_bn_[1]},
                                                    {"decoder.bn1", &dec_bn_[0]},
                                                    {"decoder.bn2", &dec_bn_[1]}};
  for (const auto& [name, bn] : bns) {
    out.emplace_back(name + ".running_mean", &bn->stats.running_mean);
    out.emplace_back(name + ".running_var", &bn->stats.running_var);
  }
  return out;
}

template <typename Real>
ModelState<Real> LseModel<Real>::state() const {
  ModelState<Real> s;
  for (const auto& [name, v] : named_parameters()) s.emplace_back(name, v->value);
  for (const auto& [name, t] : const_cast<LseModel*>(this)->named_buffers())
    s.emplace_back(name, *t);
  return s;
}

template <typename Real>
void LseModel<Real>::load_state(const ModelState<Real>& s) {
  auto params = named_parameters();
  auto buffers = named_buffers();
  if (s.size() != params.size() + buffers.size())
    throw StructuralError("load_state: expected " +
                          std::to_string(params.size() + buffers.size()) + " tensors, got " +
                          std::to_string(s.size()));
  auto check = [](const std::string& want, const Shape& shape,
                  const std::pair<std::string, Tensor<Real>>& got) {
    if (got.first != want)
      throw StructuralError("load_state: expected tensor '" + want + "', got '" + got.first + "'");
    if (got.second.shape() != shape)
      throw StructuralError("load_state: tensor '" + want + "' has shape " +
                            shape_str(got.second.shape()) + ", expected " + shape_str(shape));
  };
  std::size_t i = 0;
  for (auto& [name, v] : params) {
    check(name, v->shape(), s[i]);
    v->value = s[i++].second;
  }
  for (auto& [name, t] : buffers) {
    check(name, t->shape(), s[i]);
    *t = s[i++].second;
  }
}

template <typename Real>
ParamCounts LseModel<Real>::param_count() const {
  ParamCounts c;
  for (const auto& [name, v] : named_parameters()) {
    if (name.starts_with("encoder."))
      c.encoder += v->size();
    else if (name.starts_with("decoder."))
      c.decoder += v->size();
    else
      c.snn += v->size();
  }
  return c;
}

template class LseModel<float>;
template class LseModel<double>;

}  // namespace lse::model
