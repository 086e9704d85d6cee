#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "flowdet/io/checkpoint.hpp"
#include "flowdet/nn/layers.hpp"
#include "flowdet/nn/lstm.hpp"
#include "flowdet/rng.hpp"

namespace flowdet::nn {

/// A plain layer stack with its own dropout RNG stream.
template <class S = double>
class Network {
 public:
  explicit Network(std::uint64_t seed = 0) : seed_(seed), rng_(derive_seed(seed, 0x6e6574ULL)) {}

  template <class L, class... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor<S> forward(const Tensor<S>& x, Mode mode) {
    Tensor<S> cur = x;
    for (auto& l : layers_) cur = l->forward(cur, mode, rng_);
    return cur;
  }

  Tensor<S> backward(const Tensor<S>& dy) {
    Tensor<S> cur = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
  }

  std::vector<Param<S>*> params() {
    std::vector<Param<S>*> out;
    for (auto& l : layers_) {
      for (auto* p : l->params()) out.push_back(p);
    }
    return out;
  }

  std::vector<Tensor<S>*> buffers() {
    std::vector<Tensor<S>*> out;
    for (auto& l : layers_) {
      for (auto* b : l->buffers()) out.push_back(b);
    }
    return out;
  }

  std::size_t param_count() {
    std::size_t n = 0;
    for (auto* p : params()) n += p->value.size();
    return n;
  }

  void zero_grads() {
    for (auto* p : params()) p->zero_grad();
  }

  void set_dropout_enabled(bool on) {
    for (auto& l : layers_) {
      if (auto* d = dynamic_cast<Dropout<S>*>(l.get())) d->enabled = on;
    }
  }

  /// Param values + buffers, in declaration order.
  std::vector<S> snapshot() {
    std::vector<S> out;
    for (auto* p : params()) out.insert(out.end(), p->value.data.begin(), p->value.data.end());
    for (auto* b : buffers()) out.insert(out.end(), b->data.begin(), b->data.end());
    return out;
  }

  void restore(const std::vector<S>& snap) {
    std::size_t off = 0;
    for (auto* p : params()) {
      if (off + p->value.size() > snap.size()) throw ShapeError("snapshot too short");
      std::copy(snap.begin() + off, snap.begin() + off + p->value.size(), p->value.data.begin());
      off += p->value.size();
    }
    for (auto* b : buffers()) {
      if (off + b->size() > snap.size()) throw ShapeError("snapshot too short");
      std::copy(snap.begin() + off, snap.begin() + off + b->size(), b->data.begin());
      off += b->size();
    }
    if (off != snap.size()) throw ShapeError("snapshot size mismatch");
  }

  void reseed(std::uint64_t seed) {
    seed_ = seed;
    rng_ = Rng(derive_seed(seed, 0x6e6574ULL));
  }

  std::uint64_t seed() const { return seed_; }
  Rng& rng() { return rng_; }
  const std::vector<std::unique_ptr<Layer<S>>>& layers() const { return layers_; }

  nlohmann::json layer_specs() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& l : layers_) out.push_back(l->spec());
    return out;
  }

 private:
  std::uint64_t seed_;
  Rng rng_;
  std::vector<std::unique_ptr<Layer<S>>> layers_;
};

/// Rebuilds a layer stack from checkpoint specs (weights loaded separately).
template <class S = double>
Network<S> network_from_specs(const nlohmann::json& specs, std::uint64_t seed) {
  Network<S> net(seed);
  Rng init_rng(derive_seed(seed, 0x696e6974ULL));
  for (const auto& sp : specs) {
    const std::string kind = sp.at("kind").get<std::string>();
    if (kind == "reshape") {
      net.template add<Reshape<S>>(sp.at("shape").get<std::vector<std::size_t>>());
    } else if (kind == "flatten") {
      net.template add<Flatten<S>>();
    } else if (kind == "relu") {
      net.template add<ReLU<S>>();
    } else if (kind == "dropout") {
      net.template add<Dropout<S>>(sp.at("rate").get<double>());
    } else if (kind == "dense") {
      net.template add<Dense<S>>(sp.at("in").get<std::size_t>(), sp.at("out").get<std::size_t>(),
                                 init_rng);
    } else if (kind == "conv2d") {
      net.template add<Conv2d<S>>(sp.at("in_ch").get<std::size_t>(),
                                  sp.at("out_ch").get<std::size_t>(),
                                  sp.at("kh").get<std::size_t>(), sp.at("kw").get<std::size_t>(),
                                  init_rng);
    } else if (kind == "batchnorm") {
      net.template add<BatchNorm<S>>(sp.at("channels").get<std::size_t>(),
                                     sp.value("eps", 1e-5), sp.value("momentum", 0.1));
    } else if (kind == "lstm") {
      net.template add<Lstm<S>>(sp.at("input").get<std::size_t>(),
                                sp.at("hidden").get<std::size_t>(), init_rng);
    } else {
      throw ParseError(cat("unknown layer kind '", kind, "' in checkpoint"));
    }
  }
  return net;
}

template <class S>
void save_network(Network<S>& net, const std::string& model_kind,
                  const std::filesystem::path& path) {
  nlohmann::json header;
  header["kind"] = model_kind;
  header["scalar"] = "f64";
  header["seed"] = net.seed();
  header["layers"] = net.layer_specs();
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<double> payload;
  auto push = [&](const std::string& name, const Tensor<S>& t) {
    tensors.push_back({{"name", name}, {"shape", t.shape}});
    for (const auto& v : t.data) payload.push_back(static_cast<double>(v));
  };
  std::size_t li = 0;
  for (auto* p : net.params()) push(cat("p", li++, ".", p->name), p->value);
  li = 0;
  for (auto* b : net.buffers()) push(cat("buf", li++), *b);
  header["tensors"] = tensors;
  io::write_checkpoint(path, std::move(header), payload);
}

template <class S = double>
std::pair<std::string, Network<S>> load_network(const std::filesystem::path& path) {
  io::Checkpoint ck = io::read_checkpoint(path);
  const std::string kind = ck.header.value("kind", "");
  Network<S> net = network_from_specs<S>(ck.header.at("layers"),
                                         ck.header.value("seed", std::uint64_t{0}));
  std::vector<S> snap(ck.payload.begin(), ck.payload.end());
  net.restore(snap);
  return {kind, std::move(net)};
}

}  // namespace flowdet::nn
