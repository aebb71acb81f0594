#include "nevae/model.h"

#include <cmath>
#include <random>

#include "nevae/molgraph.h"

namespace nevae {

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Tensor t({rows, cols});
  for (double& v : t.data()) v = normal(rng);
  return t;
}

Dense make_dense(std::size_t in, std::size_t out, std::mt19937_64& rng, double gain = 1.0,
                 double bias = 0.0) {
  return {random_matrix(in, out, gain / std::sqrt(static_cast<double>(in)), rng),
          Tensor::filled({out}, bias)};
}

Head make_head(std::size_t in, std::size_t hidden, std::size_t out, std::mt19937_64& rng) {
  return {make_dense(in, hidden, rng), make_dense(hidden, out, rng)};
}

template <typename Params, typename Fn>
void visit(Params& p, Fn&& fn) {
  for (std::size_t k = 0; k < p.encoder.hop_weights.size(); ++k)
    fn("encoder.hop" + std::to_string(k + 1), p.encoder.hop_weights[k]);
  auto dense = [&](const std::string& name, auto& d) {
    fn(name + ".weight", d.weight);
    fn(name + ".bias", d.bias);
  };
  auto head = [&](const std::string& name, auto& h) {
    dense(name + ".hidden", h.hidden);
    dense(name + ".output", h.output);
  };
  dense("encoder.hidden", p.encoder.hidden);
  dense("encoder.mu", p.encoder.mu);
  dense("encoder.sigma", p.encoder.sigma);
  head("decoder.feature", p.decoder.feature);
  dense("decoder.intensity_node", p.decoder.intensity_node);
  dense("decoder.intensity_out", p.decoder.intensity_out);
  head("decoder.edge", p.decoder.edge);
  head("decoder.weight", p.decoder.weight);
}

}  // namespace

ModelParams ModelParams::init(const ModelDims& dims, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t d = dims.latent, k = dims.hops, h = dims.hidden;
  ModelParams p;
  p.dims = dims;
  for (std::size_t i = 0; i < k; ++i) p.encoder.hop_weights.push_back(random_matrix(d, d, 0.5, rng));
  p.encoder.hidden = make_dense(k * d, h, rng);
  p.encoder.mu = make_dense(h, d, rng);
  // Start with modest posterior noise (softplus(-1) ~ 0.31).
  p.encoder.sigma = make_dense(h, d, rng, 0.1, -1.0);
  p.decoder.feature = make_head(d, h, kNumAtomTypes, rng);
  p.decoder.intensity_node = make_dense(d, h, rng);
  p.decoder.intensity_out = make_dense(h, 1, rng, 0.1);
  p.decoder.edge = make_head(d, h, 1, rng);
  p.decoder.weight = make_head(d, h, kMaxBondOrder, rng);
  return p;
}

std::vector<Tensor*> ModelParams::tensors() {
  std::vector<Tensor*> out;
  visit(*this, [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<const Tensor*> ModelParams::tensors() const {
  std::vector<const Tensor*> out;
  visit(*this, [&](const std::string&, const Tensor& t) { out.push_back(&t); });
  return out;
}

std::vector<std::string> ModelParams::tensor_names() const {
  std::vector<std::string> out;
  visit(*this, [&](const std::string& name, const Tensor&) { out.push_back(name); });
  return out;
}

std::size_t ModelParams::num_scalars() const {
  std::size_t n = 0;
  for (const Tensor* t : tensors()) n += t->size();
  return n;
}

namespace {

Var leaf(Tape& tape, const Tensor& t, bool trainable, std::vector<Var>* all) {
  Var v = trainable ? tape.variable(t) : tape.constant(t);
  if (all) all->push_back(v);
  return v;
}

DenseVars bind_dense(Tape& tape, const Dense& d, bool trainable, std::vector<Var>* all) {
  DenseVars out;
  out.weight = leaf(tape, d.weight, trainable, all);
  out.bias = leaf(tape, d.bias, trainable, all);
  return out;
}

HeadVars bind_head(Tape& tape, const Head& h, bool trainable, std::vector<Var>* all) {
  HeadVars out;
  out.hidden = bind_dense(tape, h.hidden, trainable, all);
  out.output = bind_dense(tape, h.output, trainable, all);
  return out;
}

DecoderVars bind_decoder_into(Tape& tape, const DecoderParams& p, bool trainable,
                              std::vector<Var>* all) {
  DecoderVars out;
  out.feature = bind_head(tape, p.feature, trainable, all);
  out.intensity_node = bind_dense(tape, p.intensity_node, trainable, all);
  out.intensity_out = bind_dense(tape, p.intensity_out, trainable, all);
  out.edge = bind_head(tape, p.edge, trainable, all);
  out.weight = bind_head(tape, p.weight, trainable, all);
  return out;
}

}  // namespace

ModelVars bind(Tape& tape, const ModelParams& params, bool trainable) {
  ModelVars out;
  for (const Tensor& w : params.encoder.hop_weights)
    out.encoder.hop_weights.push_back(leaf(tape, w, trainable, &out.all));
  out.encoder.hidden = bind_dense(tape, params.encoder.hidden, trainable, &out.all);
  out.encoder.mu = bind_dense(tape, params.encoder.mu, trainable, &out.all);
  out.encoder.sigma = bind_dense(tape, params.encoder.sigma, trainable, &out.all);
  out.decoder = bind_decoder_into(tape, params.decoder, trainable, &out.all);
  return out;
}

DecoderVars bind_decoder(Tape& tape, const DecoderParams& params, bool trainable) {
  return bind_decoder_into(tape, params, trainable, nullptr);
}

Var apply(const DenseVars& layer, Var x) { return add_row(matmul(x, layer.weight), layer.bias); }

Var apply(const HeadVars& head, Var x) { return apply(head.output, softplus(apply(head.hidden, x))); }

}  // namespace nevae
