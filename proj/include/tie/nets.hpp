#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tie/optim.hpp"
#include "tie/rng.hpp"
#include "tie/tensor.hpp"

namespace tie {

static_assert(std::endian::native == std::endian::little,
              "checkpoint layout assumes little-endian doubles");

struct LinearLayer {
  Parameter W, b;  // W [in x out], b [1 x out]
  LinearLayer(std::size_t in, std::size_t out)
      : W(Tensor(Shape{in, out})), b(Tensor(Shape{1, out})) {}
};

// MLP classifier with K = n+1 logits. The penultimate features returned by
// forward() are the last hidden activation after the nonlinearity; they feed
// both the feature-space scores and the diversity term.
class ClassifierNet {
 public:
  ClassifierNet(std::size_t input_dim, std::vector<std::size_t> hidden,
                std::size_t num_classes)
      : input_dim_(input_dim),
        num_classes_(num_classes),
        hidden_(std::move(hidden)) {
    std::size_t in = input_dim_;
    for (std::size_t h : hidden_) {
      layers_.emplace_back(in, h);
      in = h;
    }
    layers_.emplace_back(in, num_classes_);
  }

  // He-style fan-in init for the weights, zero biases
  void init_weights(Rng& rng) {
    for (LinearLayer& l : layers_) {
      const std::size_t fan_in = l.W.value.dim(0);
      const double sigma = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (double& w : l.W.value.data()) w = rng.normal(0.0, sigma);
      for (double& b : l.b.value.data()) b = 0.0;
    }
  }

  struct Forward {
    Tensor logits;
    Tensor features;  // penultimate activations [B x F]
  };

  Forward forward(const Tensor& x) {
    if (x.ndim() != 2 || x.dim(1) != input_dim_)
      tensor_fail("classifier_forward: expected input [Bx" +
                  std::to_string(input_dim_) + "], got " +
                  shape_str(x.shape()));
    Tensor h = x;
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i)
      h = relu(add(matmul(h, layers_[i].W.value), layers_[i].b.value));
    Tensor logits =
        add(matmul(h, layers_.back().W.value), layers_.back().b.value);
    return Forward{logits, h};
  }

  Tensor logits(const Tensor& x) { return forward(x).logits; }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (LinearLayer& l : layers_) {
      out.push_back(&l.W);
      out.push_back(&l.b);
    }
    return out;
  }

  std::size_t input_dim() const { return input_dim_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t feature_dim() const {
    return hidden_.empty() ? input_dim_ : hidden_.back();
  }
  const std::vector<std::size_t>& hidden_dims() const { return hidden_; }

 private:
  std::size_t input_dim_, num_classes_;
  std::vector<std::size_t> hidden_;
  std::vector<LinearLayer> layers_;
};

// Conditional generator G(z, y~): the latent vector and the simplex
// conditioning vector are concatenated, passed through relu hidden layers,
// and squashed to [0,1] by a sigmoid output.
class GeneratorNet {
 public:
  GeneratorNet(std::size_t latent_dim, std::size_t cond_dim,
               std::vector<std::size_t> hidden, std::size_t out_dim)
      : latent_dim_(latent_dim),
        cond_dim_(cond_dim),
        out_dim_(out_dim),
        hidden_(std::move(hidden)) {
    std::size_t in = latent_dim_ + cond_dim_;
    for (std::size_t h : hidden_) {
      layers_.emplace_back(in, h);
      in = h;
    }
    layers_.emplace_back(in, out_dim_);
  }

  // all weights N(0, 0.02^2), zero biases
  void init_weights(Rng& rng) {
    for (LinearLayer& l : layers_) {
      for (double& w : l.W.value.data()) w = rng.normal(0.0, 0.02);
      for (double& b : l.b.value.data()) b = 0.0;
    }
  }

  Tensor forward(const Tensor& z, const Tensor& y_tilde) {
    if (z.ndim() != 2 || z.dim(1) != latent_dim_)
      tensor_fail("generator_forward: expected latent [Bx" +
                  std::to_string(latent_dim_) + "], got " +
                  shape_str(z.shape()));
    if (y_tilde.ndim() != 2 || y_tilde.dim(1) != cond_dim_ ||
        y_tilde.dim(0) != z.dim(0))
      tensor_fail("generator_forward: expected conditioning [" +
                  std::to_string(z.dim(0)) + "x" + std::to_string(cond_dim_) +
                  "], got " + shape_str(y_tilde.shape()));
    for (std::size_t b = 0; b < y_tilde.dim(0); ++b) {
      double s = 0.0;
      for (std::size_t k = 0; k < cond_dim_; ++k) {
        const double v = y_tilde.at(b * cond_dim_ + k);
        if (v < -1e-9)
          tensor_fail("generator_forward: conditioning row " +
                      std::to_string(b) + " has negative entry");
        s += v;
      }
      if (std::abs(s - 1.0) > 1e-6)
        tensor_fail("generator_forward: conditioning row " + std::to_string(b) +
                    " sums to " + std::to_string(s) + ", not a simplex vector");
    }
    Tensor h = concat(z, y_tilde);
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i)
      h = relu(add(matmul(h, layers_[i].W.value), layers_[i].b.value));
    return sigmoid(
        add(matmul(h, layers_.back().W.value), layers_.back().b.value));
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (LinearLayer& l : layers_) {
      out.push_back(&l.W);
      out.push_back(&l.b);
    }
    return out;
  }

  std::size_t latent_dim() const { return latent_dim_; }
  std::size_t cond_dim() const { return cond_dim_; }
  std::size_t out_dim() const { return out_dim_; }
  const std::vector<std::size_t>& hidden_dims() const { return hidden_; }

 private:
  std::size_t latent_dim_, cond_dim_, out_dim_;
  std::vector<std::size_t> hidden_;
  std::vector<LinearLayer> layers_;
};

inline void init_weights(ClassifierNet& net, std::uint64_t seed) {
  Rng rng(seed);
  net.init_weights(rng);
}

inline void init_weights(GeneratorNet& net, std::uint64_t seed) {
  Rng rng(seed);
  net.init_weights(rng);
}

// ------------------------------------------------------------ checkpoint --
//
// Layout: 8-byte magic "TIECKPT1", u64 little-endian descriptor length, JSON
// descriptor (architectures + run metadata), then every parameter tensor as
// raw little-endian doubles: classifier first, generator second, each in
// parameters() order.

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::size_t n = 0;  // in-distribution class count, garbage excluded
  double tau = 0.0;   // final uncertainty threshold
  std::size_t epoch = 0;
  std::size_t height = 0, width = 0;  // 0x0 for non-image data
};

namespace detail {

constexpr char kCkptMagic[8] = {'T', 'I', 'E', 'C', 'K', 'P', 'T', '1'};

inline void write_raw(std::ofstream& os, const void* p, std::size_t bytes) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(bytes));
}

inline void read_raw(std::ifstream& is, void* p, std::size_t bytes,
                     const std::string& what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(is.gcount()) != bytes)
    tensor_fail("checkpoint: truncated file while reading " + what);
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, ClassifierNet& clf,
                            GeneratorNet& gen, const CheckpointMeta& meta) {
  nlohmann::json desc;
  desc["format"] = "TIECKPT1";
  desc["classifier"] = {{"input_dim", clf.input_dim()},
                        {"hidden", clf.hidden_dims()},
                        {"classes", clf.num_classes()}};
  desc["generator"] = {{"latent_dim", gen.latent_dim()},
                       {"cond_dim", gen.cond_dim()},
                       {"hidden", gen.hidden_dims()},
                       {"out_dim", gen.out_dim()}};
  desc["seed"] = meta.seed;
  desc["n"] = meta.n;
  desc["tau"] = meta.tau;
  desc["epoch"] = meta.epoch;
  desc["height"] = meta.height;
  desc["width"] = meta.width;
  const std::string djson = desc.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) tensor_fail("checkpoint: cannot open " + path + " for writing");
  detail::write_raw(os, detail::kCkptMagic, 8);
  const std::uint64_t dlen = djson.size();
  detail::write_raw(os, &dlen, 8);
  detail::write_raw(os, djson.data(), djson.size());
  for (Parameter* p : clf.parameters())
    detail::write_raw(os, p->value.data().data(),
                      p->value.size() * sizeof(double));
  for (Parameter* p : gen.parameters())
    detail::write_raw(os, p->value.data().data(),
                      p->value.size() * sizeof(double));
  if (!os) tensor_fail("checkpoint: write to " + path + " failed");
}

struct LoadedCheckpoint {
  ClassifierNet clf;
  GeneratorNet gen;
  CheckpointMeta meta;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) tensor_fail("checkpoint: cannot open " + path);
  char magic[8];
  detail::read_raw(is, magic, 8, "magic");
  if (std::memcmp(magic, detail::kCkptMagic, 8) != 0)
    tensor_fail("checkpoint: bad magic in " + path);
  std::uint64_t dlen = 0;
  detail::read_raw(is, &dlen, 8, "descriptor length");
  std::string djson(dlen, '\0');
  detail::read_raw(is, djson.data(), dlen, "descriptor");
  nlohmann::json desc = nlohmann::json::parse(djson);

  ClassifierNet clf(desc["classifier"]["input_dim"].get<std::size_t>(),
                    desc["classifier"]["hidden"].get<std::vector<std::size_t>>(),
                    desc["classifier"]["classes"].get<std::size_t>());
  GeneratorNet gen(desc["generator"]["latent_dim"].get<std::size_t>(),
                   desc["generator"]["cond_dim"].get<std::size_t>(),
                   desc["generator"]["hidden"].get<std::vector<std::size_t>>(),
                   desc["generator"]["out_dim"].get<std::size_t>());
  CheckpointMeta meta;
  meta.seed = desc["seed"].get<std::uint64_t>();
  meta.n = desc["n"].get<std::size_t>();
  meta.tau = desc["tau"].get<double>();
  meta.epoch = desc["epoch"].get<std::size_t>();
  meta.height = desc["height"].get<std::size_t>();
  meta.width = desc["width"].get<std::size_t>();

  for (Parameter* p : clf.parameters())
    detail::read_raw(is, p->value.data().data(),
                     p->value.size() * sizeof(double), "classifier weights");
  for (Parameter* p : gen.parameters())
    detail::read_raw(is, p->value.data().data(),
                     p->value.size() * sizeof(double), "generator weights");
  return LoadedCheckpoint{std::move(clf), std::move(gen), meta};
}

}  // namespace tie
