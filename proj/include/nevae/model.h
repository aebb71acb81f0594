#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nevae/tensor.h"

namespace nevae {

struct ModelDims {
  std::size_t latent = 5;   // D
  std::size_t hops = 5;     // K
  std::size_t hidden = 16;  // width of every softplus hidden layer
};

/// Affine layer, row convention: y = x W + b with W in x out.
struct Dense {
  Tensor weight;
  Tensor bias;
};

/// One softplus hidden layer followed by a linear output layer.
struct Head {
  Dense hidden;
  Dense output;
};

struct EncoderParams {
  std::vector<Tensor> hop_weights;  // K matrices, D x D
  Dense hidden;                     // K*D -> hidden, softplus
  Dense mu;                         // hidden -> D, linear
  Dense sigma;                      // hidden -> D, softplus
};

struct DecoderParams {
  Head feature;          // z_u -> atom-type logits
  Dense intensity_node;  // z_u -> hidden, softplus, summed over nodes
  Dense intensity_out;   // pooled -> scalar log edge intensity
  Head edge;             // z_u + z_v -> edge logit
  Head weight;           // z_u + z_v -> bond-order logits
};

struct ModelParams {
  ModelDims dims;
  EncoderParams encoder;
  DecoderParams decoder;
  double lambda_n = 1.0;  // Poisson rate of the node count

  /// Random initialisation; sizes depend on `dims` only.
  static ModelParams init(const ModelDims& dims, std::uint64_t seed);

  /// Fixed traversal order shared by checkpoints, the optimizer and bind().
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> tensor_names() const;
  std::size_t num_scalars() const;
};

// ---- tape binding ----------------------------------------------------------

struct DenseVars {
  Var weight;
  Var bias;
};
struct HeadVars {
  DenseVars hidden;
  DenseVars output;
};
struct EncoderVars {
  std::vector<Var> hop_weights;
  DenseVars hidden, mu, sigma;
};
struct DecoderVars {
  HeadVars feature;
  DenseVars intensity_node, intensity_out;
  HeadVars edge, weight;
};
struct ModelVars {
  EncoderVars encoder;
  DecoderVars decoder;
  std::vector<Var> all;  // same order as ModelParams::tensors()
};

/// Places every parameter on `tape`, as gradient-tracked leaves when
/// `trainable`, otherwise as constants.
ModelVars bind(Tape& tape, const ModelParams& params, bool trainable = true);
DecoderVars bind_decoder(Tape& tape, const DecoderParams& params, bool trainable = true);

Var apply(const DenseVars& layer, Var x);
Var apply(const HeadVars& head, Var x);

}  // namespace nevae
