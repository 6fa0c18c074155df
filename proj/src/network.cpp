#include "ibrl/network.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ibrl::nets {

namespace {

using nlohmann::json;

constexpr int kCheckpointVersion = 1;

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

std::string head_name(Head head) {
  switch (head) {
    case Head::kLinear: return "linear";
    case Head::kBounded: return "bounded";
    case Head::kGaussian: return "gaussian";
  }
  return "linear";
}

Head head_from_name(const std::string& name) {
  if (name == "linear") return Head::kLinear;
  if (name == "bounded") return Head::kBounded;
  if (name == "gaussian") return Head::kGaussian;
  throw ContractError("unknown head tag: " + name);
}

Eigen::Index Network::parameter_count() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l)
    n += weights[l].size() + biases[l].size();
  return n;
}

Network mlp_init(const std::vector<int>& layer_sizes, Head head,
                 std::uint64_t seed, const Vector& lower, const Vector& upper,
                 double sigma_floor) {
  require(layer_sizes.size() >= 2, "mlp_init: need at least two layer sizes");
  for (int s : layer_sizes)
    require(s > 0, "mlp_init: layer sizes must be positive");

  Network net;
  net.layer_sizes = layer_sizes;
  net.head = head;
  net.sigma_floor = sigma_floor;
  if (head == Head::kBounded) {
    require(lower.size() == layer_sizes.back() &&
                upper.size() == layer_sizes.back(),
            "mlp_init: bounded head needs per-dimension bounds");
    require((lower.array() < upper.array()).all(),
            "mlp_init: bounds must satisfy lower < upper");
    net.lower = lower;
    net.upper = upper;
  }

  Rng rng = make_rng(seed);
  const std::size_t n_layers = layer_sizes.size() - 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    int in = layer_sizes[l];
    int out = layer_sizes[l + 1];
    if (l + 1 == n_layers && head == Head::kGaussian) out *= 2;
    const double a = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> dist(-a, a);
    Matrix w(out, in);
    for (int j = 0; j < in; ++j)
      for (int i = 0; i < out; ++i) w(i, j) = dist(rng);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Vector::Zero(out));
  }
  return net;
}

namespace {

Vector raw_forward(const Network& net, const Vector& input) {
  require(input.size() == net.input_dim(),
          "mlp_forward: input dimension mismatch");
  Vector h = input;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    Vector z = net.weights[l] * h + net.biases[l];
    if (l + 1 < net.weights.size()) z = z.array().tanh();
    h = std::move(z);
  }
  return h;
}

}  // namespace

Vector mlp_forward(const Network& net, const Vector& input) {
  require(net.head != Head::kGaussian,
          "mlp_forward: use mlp_forward_gaussian for gaussian heads");
  Vector out = raw_forward(net, input);
  if (net.head == Head::kBounded) {
    out = net.lower.array() +
          (net.upper - net.lower).array() * (out.array().tanh() + 1.0) / 2.0;
  }
  return out;
}

GaussianOutput mlp_forward_gaussian(const Network& net, const Vector& input) {
  require(net.head == Head::kGaussian,
          "mlp_forward_gaussian: network has no gaussian head");
  Vector out = raw_forward(net, input);
  const int d = net.output_dim();
  GaussianOutput g;
  g.mean = out.head(d);
  g.sigma = out.tail(d).unaryExpr([&](double x) {
    return stable_softplus(x) + net.sigma_floor;
  });
  return g;
}

ParamVector to_params(const Network& net) {
  ParamVector params;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    params.push_segment("W" + std::to_string(l),
                        static_cast<int>(net.weights[l].rows()),
                        static_cast<int>(net.weights[l].cols()));
    params.push_segment("b" + std::to_string(l),
                        static_cast<int>(net.biases[l].size()), 1);
  }
  Eigen::Index at = 0;
  Vector& v = params.values();
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    v.segment(at, net.weights[l].size()) = Eigen::Map<const Vector>(
        net.weights[l].data(), net.weights[l].size());
    at += net.weights[l].size();
    v.segment(at, net.biases[l].size()) = net.biases[l];
    at += net.biases[l].size();
  }
  return params;
}

void from_params(Network& net, const Vector& flat) {
  require(flat.size() == net.parameter_count(),
          "from_params: parameter length mismatch");
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    net.weights[l] = Eigen::Map<const Matrix>(
        flat.data() + at, net.weights[l].rows(), net.weights[l].cols());
    at += net.weights[l].size();
    net.biases[l] = flat.segment(at, net.biases[l].size());
    at += net.biases[l].size();
  }
}

BoundNet bind(ad::Tape& tape, const Network& net, bool trainable) {
  BoundNet bound;
  bound.net = &net;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    bound.layers.push_back(trainable ? tape.param(net.weights[l])
                                     : tape.constant(net.weights[l]));
    Matrix b = net.biases[l];
    bound.layers.push_back(trainable ? tape.param(b) : tape.constant(b));
  }
  return bound;
}

namespace {

ad::Var raw_forward_tape(ad::Tape& tape, const BoundNet& bound,
                         ad::Var input) {
  const Network& net = *bound.net;
  require(input.rows() == net.input_dim(),
          "forward: input dimension mismatch");
  const std::size_t n_layers = net.weights.size();
  ad::Var h = input;
  for (std::size_t l = 0; l < n_layers; ++l) {
    ad::Var z = tape.matmul(bound.layers[2 * l], h);
    z = h.cols() == 1 ? tape.add(z, bound.layers[2 * l + 1])
                      : tape.colwise_add(z, bound.layers[2 * l + 1]);
    if (l + 1 < n_layers) z = tape.tanh(z);
    h = z;
  }
  return h;
}

}  // namespace

ad::Var forward(ad::Tape& tape, const BoundNet& bound, ad::Var input) {
  const Network& net = *bound.net;
  require(net.head != Head::kGaussian,
          "forward: use forward_gaussian for gaussian heads");
  ad::Var out = raw_forward_tape(tape, bound, input);
  if (net.head == Head::kBounded) {
    require(out.cols() == 1, "forward: bounded head expects a vector input");
    ad::Var lo = tape.constant(Matrix(net.lower));
    ad::Var half_span = tape.constant(Matrix((net.upper - net.lower) / 2.0));
    out = tape.add(lo, tape.cmul(half_span,
                                 tape.add_const(tape.tanh(out), 1.0)));
  }
  return out;
}

BoundGaussianOutput forward_gaussian(ad::Tape& tape, const BoundNet& bound,
                                     ad::Var input) {
  const Network& net = *bound.net;
  require(net.head == Head::kGaussian,
          "forward_gaussian: network has no gaussian head");
  ad::Var out = raw_forward_tape(tape, bound, input);
  const int d = net.output_dim();
  BoundGaussianOutput g;
  g.mean = tape.slice_rows(out, 0, d);
  g.sigma = tape.add_const(tape.softplus(tape.slice_rows(out, d, d)),
                           net.sigma_floor);
  return g;
}

std::string to_json(const Network& net) {
  json doc;
  doc["format_version"] = kCheckpointVersion;
  doc["kind"] = "mlp";
  doc["layer_sizes"] = net.layer_sizes;
  doc["head"] = head_name(net.head);
  doc["sigma_floor"] = net.sigma_floor;
  if (net.head == Head::kBounded) {
    doc["lower"] = std::vector<double>(net.lower.begin(), net.lower.end());
    doc["upper"] = std::vector<double>(net.upper.begin(), net.upper.end());
  }
  const ParamVector params = to_params(net);
  doc["params"] = std::vector<double>(params.values().begin(),
                                      params.values().end());
  return doc.dump();
}

Network from_json(const std::string& text) {
  json doc = json::parse(text);
  require(doc.contains("format_version"),
          "checkpoint: missing field format_version");
  require(doc["format_version"].get<int>() == kCheckpointVersion,
          "checkpoint: unsupported format_version");
  require(doc.contains("layer_sizes"), "checkpoint: missing field layer_sizes");
  require(doc.contains("head"), "checkpoint: missing field head");
  require(doc.contains("params"), "checkpoint: missing field params");

  Network net;
  net.layer_sizes = doc["layer_sizes"].get<std::vector<int>>();
  net.head = head_from_name(doc["head"].get<std::string>());
  net.sigma_floor = doc.value("sigma_floor", 1e-2);
  if (net.head == Head::kBounded) {
    require(doc.contains("lower") && doc.contains("upper"),
            "checkpoint: bounded head missing field lower/upper");
    auto lo = doc["lower"].get<std::vector<double>>();
    auto hi = doc["upper"].get<std::vector<double>>();
    net.lower = Eigen::Map<const Vector>(lo.data(), lo.size());
    net.upper = Eigen::Map<const Vector>(hi.data(), hi.size());
  }

  const std::size_t n_layers = net.layer_sizes.size() - 1;
  for (std::size_t l = 0; l < n_layers; ++l) {
    int in = net.layer_sizes[l];
    int out = net.layer_sizes[l + 1];
    if (l + 1 == n_layers && net.head == Head::kGaussian) out *= 2;
    net.weights.emplace_back(Matrix::Zero(out, in));
    net.biases.emplace_back(Vector::Zero(out));
  }
  auto flat = doc["params"].get<std::vector<double>>();
  require(static_cast<Eigen::Index>(flat.size()) == net.parameter_count(),
          "checkpoint: field params has wrong length");
  from_params(net, Eigen::Map<const Vector>(flat.data(), flat.size()));
  return net;
}

void save_network(const Network& net, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "save_network: cannot open " + path);
  out << to_json(net) << '\n';
}

Network load_network(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "load_network: cannot open " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

}  // namespace ibrl::nets
