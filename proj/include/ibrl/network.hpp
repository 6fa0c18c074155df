#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ibrl/common.hpp"
#include "ibrl/param_vector.hpp"
#include "ibrl/tape.hpp"

namespace ibrl::nets {

enum class Head {
  kLinear,    // raw affine output
  kBounded,   // squashed strictly into [lower, upper] per dimension
  kGaussian,  // mean (linear) and per-dimension sigma >= sigma_floor
};

std::string head_name(Head head);
Head head_from_name(const std::string& name);

struct GaussianOutput {
  Vector mean;
  Vector sigma;
};

// Fully connected MLP with tanh hidden activations. Immutable once trained;
// copies are cheap enough to share by value.
struct Network {
  std::vector<int> layer_sizes;  // includes input and logical output size
  std::vector<Matrix> weights;   // [out x in] per layer
  std::vector<Vector> biases;
  Head head = Head::kLinear;
  Vector lower;  // bounded head only
  Vector upper;
  double sigma_floor = 1e-2;  // gaussian head only

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  Eigen::Index parameter_count() const;
};

// Deterministically seeded Glorot-uniform initialization. `layer_sizes`
// gives the logical sizes; a gaussian head internally doubles the last layer
// to host mean and sigma.
Network mlp_init(const std::vector<int>& layer_sizes, Head head,
                 std::uint64_t seed, const Vector& lower = Vector(),
                 const Vector& upper = Vector(), double sigma_floor = 1e-2);

Vector mlp_forward(const Network& net, const Vector& input);
GaussianOutput mlp_forward_gaussian(const Network& net, const Vector& input);

// Flat parameter packing, layout W0, b0, W1, b1, ...
ParamVector to_params(const Network& net);
void from_params(Network& net, const Vector& flat);

// A network's layers materialized on a tape. Trainable nets contribute their
// weights to gradient(); frozen nets enter as constants.
struct BoundNet {
  const Network* net = nullptr;
  std::vector<ad::Var> layers;  // W0, b0, W1, b1, ...

  std::vector<ad::Var> param_vars() const { return layers; }
};

BoundNet bind(ad::Tape& tape, const Network& net, bool trainable);

// Forward passes on the tape. Inputs may be column vectors or matrices with
// one sample per column (linear head); the bounded head expects vectors.
ad::Var forward(ad::Tape& tape, const BoundNet& bound, ad::Var input);

struct BoundGaussianOutput {
  ad::Var mean;
  ad::Var sigma;
};
BoundGaussianOutput forward_gaussian(ad::Tape& tape, const BoundNet& bound,
                                     ad::Var input);

// Versioned JSON checkpoint document.
std::string to_json(const Network& net);
Network from_json(const std::string& text);
void save_network(const Network& net, const std::string& path);
Network load_network(const std::string& path);

}  // namespace ibrl::nets
