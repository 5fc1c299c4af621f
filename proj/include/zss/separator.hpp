#pragma once

#include <map>

#include "zss/checkpoint.hpp"
#include "zss/dsp.hpp"
#include "zss/nn.hpp"

namespace zss {

// Query-conditioned U-Net separator. The mixture magnitude spectrogram runs
// through 6 encoder and 6 decoder blocks; each block is two rounds of
// [conv 3x3 -> batch_norm -> ReLU -> film bias], with stride-2 downsampling
// convs on the way in, transposed-conv upsampling plus skip concatenation on
// the way out, and a final 1x1 conv to a sigmoid mask over the mixture
// magnitude. The latent query enters as a per-channel bias after every
// convolution pair member (two embedding projections per block).

struct SepConfig {
  std::vector<Index> encoder_channels = {32, 64, 128, 256, 512, 1024};
  double channel_scale = 1.0;
  Index embedding_dim = 2048;  // L
  DspConfig stft = DspConfig::paper_separator();
  double clip_seconds = 2.0;

  static SepConfig paper(Index latent_dim = 2048) {
    SepConfig c;
    c.embedding_dim = latent_dim;
    return c;
  }

  static SepConfig desk(Index latent_dim = 256, double scale = 0.25) {
    SepConfig c;
    c.embedding_dim = latent_dim;
    c.channel_scale = scale;
    c.stft = DspConfig::desk_separator();
    return c;
  }

  Index levels() const { return static_cast<Index>(encoder_channels.size()); }

  Index ch(int i) const {
    return std::max<Index>(1, static_cast<Index>(std::llround(
                                  encoder_channels[static_cast<std::size_t>(i)] *
                                  channel_scale)));
  }

  Index clip_samples() const {
    return static_cast<Index>(clip_seconds * stft.sample_rate);
  }

  void validate() const {
    check(encoder_channels.size() == 6, "SepConfig: expected exactly 6 encoder blocks, got " +
                                            std::to_string(encoder_channels.size()));
    const std::vector<Index> ladder = {32, 64, 128, 256, 512, 1024};
    check(encoder_channels == ladder,
          "SepConfig: encoder channel ladder must be 32..1024 (scaled via channel_scale)");
    check(channel_scale > 0, "SepConfig: channel_scale must be positive");
    check(embedding_dim >= 1, "SepConfig: embedding_dim must be positive");
    stft.validate_for_istft();
  }
};

template <class S>
class UNetSeparator {
 public:
  explicit UNetSeparator(SepConfig cfg, std::uint64_t seed = 1) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, 0xf11));
    build(rng);
  }

  const SepConfig& config() const { return cfg_; }
  NamedParams<S>& params() { return params_; }
  const NamedParams<S>& params() const { return params_; }

  /// Trainable parameters plus batch-norm running statistics.
  NamedParams<S> checkpoint_tensors() const {
    NamedParams<S> all = params_;
    for (std::size_t u = 0; u < bn_states_.size(); ++u) {
      const auto& st = *bn_states_[u];
      all.emplace_back(bn_names_[u] + ".running_mean",
                       Tensor<S>::from_vector({static_cast<Index>(st.running_mean.size())},
                                              st.running_mean));
      all.emplace_back(bn_names_[u] + ".running_var",
                       Tensor<S>::from_vector({static_cast<Index>(st.running_var.size())},
                                              st.running_var));
    }
    return all;
  }

  void load_checkpoint_tensors(const NamedParams<S>& loaded) {
    restore_params(loaded, params_);
    std::map<std::string, const Tensor<S>*> index;
    for (const auto& [name, t] : loaded) index[name] = &t;
    for (std::size_t u = 0; u < bn_states_.size(); ++u) {
      auto rm = index.find(bn_names_[u] + ".running_mean");
      auto rv = index.find(bn_names_[u] + ".running_var");
      check(rm != index.end() && rv != index.end(),
            "separator checkpoint is missing batch-norm state for " + bn_names_[u]);
      bn_states_[u]->running_mean = rm->second->data();
      bn_states_[u]->running_var = rv->second->data();
    }
  }

  /// Sigmoid mask for a magnitude batch. mag: (N, T, F), query: (N, L).
  Tensor<S> forward_mask(const Tensor<S>& mag, const Tensor<S>& query, bool training) {
    check(mag.rank() == 3, "separator: magnitude batch must be (N, T, F), got " +
                               shape_str(mag.shape()));
    check(query.rank() == 2 && query.dim(1) == cfg_.embedding_dim,
          "separator: query " + shape_str(query.shape()) + " does not match L=" +
              std::to_string(cfg_.embedding_dim));
    check(mag.dim(0) == query.dim(0), "separator: batch mismatch between magnitudes " +
                                          shape_str(mag.shape()) + " and queries " +
                                          shape_str(query.shape()));
    Index N = mag.dim(0), T = mag.dim(1), F = mag.dim(2);
    Index mult = Index(1) << cfg_.levels();  // spatial dims must survive 6 halvings
    Index pt = (mult - T % mult) % mult;
    Index pf = (mult - F % mult) % mult;

    Tensor<S> x = reshape(mag, {N, 1, T, F});
    if (pt || pf) x = pad(x, {0, 0, 0, 0}, {0, 0, pt, pf});

    int unit = 0;
    std::vector<Tensor<S>> skips;
    for (int i = 0; i < cfg_.levels(); ++i) {
      x = conv_unit(unit++, x, query, training);
      x = conv_unit(unit++, x, query, training);
      skips.push_back(x);
      x = conv2d(x, down_w_[static_cast<std::size_t>(i)],
                 &down_b_[static_cast<std::size_t>(i)], 2, 2, 0, 0);
    }
    for (int j = cfg_.levels() - 1; j >= 0; --j) {
      x = conv_transpose2d(x, up_w_[static_cast<std::size_t>(j)],
                           &up_b_[static_cast<std::size_t>(j)], 2, 2);
      x = concat<S>({x, skips[static_cast<std::size_t>(j)]}, 1);
      x = conv_unit(unit++, x, query, training);
      x = conv_unit(unit++, x, query, training);
    }
    x = conv2d(x, out_w_, &out_b_, 1, 1, 0, 0);  // (N, 1, T+pt, F+pf)
    x = sigmoid(x);
    if (pt || pf) x = slice(x, {0, 0, 0, 0}, {N, 1, T, F});
    return reshape(x, {N, T, F});
  }

  struct WaveForward {
    Tensor<S> estimates;  // (N, clip_samples)
    Tensor<S> mask;       // (N, T, F)
  };

  /// Mixture waveforms -> separated waveforms, on the tape.
  WaveForward forward_waveforms(const std::vector<std::vector<S>>& mixtures,
                                const Tensor<S>& queries, bool training) {
    Index N = static_cast<Index>(mixtures.size());
    Index len = cfg_.clip_samples();
    for (const auto& m : mixtures)
      check(static_cast<Index>(m.size()) == len,
            "separator: mixture has " + std::to_string(m.size()) + " samples, expected " +
                std::to_string(len));
    const DspConfig& sc = cfg_.stft;
    Index frames = sc.content_frames(len), bins = sc.n_bins();
    Tensor<S> re = Tensor<S>::zeros({N, frames, bins});
    Tensor<S> im = Tensor<S>::zeros({N, frames, bins});
    Tensor<S> mag = Tensor<S>::zeros({N, frames, bins});
    for (Index n = 0; n < N; ++n) {
      auto spec = stft<S>(mixtures[static_cast<std::size_t>(n)], sc);
      const S* pr = spec.re.data().data();
      const S* pi = spec.im.data().data();
      S* dr = re.mutable_data().data() + n * frames * bins;
      S* di = im.mutable_data().data() + n * frames * bins;
      S* dm = mag.mutable_data().data() + n * frames * bins;
      for (Index i = 0; i < frames * bins; ++i) {
        dr[i] = pr[i];
        di[i] = pi[i];
        dm[i] = static_cast<S>(std::sqrt(static_cast<double>(pr[i]) * pr[i] +
                                         static_cast<double>(pi[i]) * pi[i]));
      }
    }
    Tensor<S> mask = forward_mask(mag, queries, training);
    Tensor<S> est_re = mul(mask, re);  // mixture phase is reused
    Tensor<S> est_im = mul(mask, im);
    Tensor<S> wave = istft_op(est_re, est_im, sc, len);
    return {wave, mask};
  }

  /// Inference on one clip.
  std::vector<S> separate(const std::vector<S>& mixture, const std::vector<S>& query) {
    check(static_cast<Index>(query.size()) == cfg_.embedding_dim,
          "separate: query has " + std::to_string(query.size()) + " dims, expected " +
              std::to_string(cfg_.embedding_dim));
    Tensor<S> q = Tensor<S>::from_vector({1, cfg_.embedding_dim}, query);
    auto out = forward_waveforms({mixture}, q, false);
    const auto& d = out.estimates.data();
    return std::vector<S>(d.begin(), d.end());
  }

  /// Pushes the final conv bias so the mask saturates at ~1 (debug identity)
  /// or ~0 (debug silence).
  void set_mask_bias(S v) { out_b_.mutable_data()[0] = v; }

 private:
  struct Unit {
    Tensor<S> conv_w, conv_b, bn_g, bn_b, film_w;
  };

  Tensor<S> conv_unit(int u, const Tensor<S>& x, const Tensor<S>& query, bool training) {
    Unit& un = units_[static_cast<std::size_t>(u)];
    Tensor<S> h = conv2d(x, un.conv_w, &un.conv_b, 1, 1, 1, 1);
    h = batch_norm(h, un.bn_g, un.bn_b, *bn_states_[static_cast<std::size_t>(u)], training);
    h = relu(h);
    Tensor<S> bias = linear(query, un.film_w);  // (N, ch), no bias term
    Index ch = bias.dim(1);
    return add(h, reshape(bias, {bias.dim(0), ch, 1, 1}));
  }

  void add_unit(const std::string& name, Index in_ch, Index out_ch, Rng& rng) {
    Unit u;
    double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * 9));
    u.conv_w = Tensor<S>::rand_uniform({out_ch, in_ch, 3, 3}, rng, -bound, bound)
                   .set_requires_grad();
    u.conv_b = Tensor<S>::zeros({out_ch}).set_requires_grad();
    u.bn_g = Tensor<S>::full({out_ch}, S(1)).set_requires_grad();
    u.bn_b = Tensor<S>::zeros({out_ch}).set_requires_grad();
    u.film_w = Tensor<S>::trunc_normal({out_ch, cfg_.embedding_dim}, rng, 0.02)
                   .set_requires_grad();
    params_.push_back({name + ".conv.w", u.conv_w});
    params_.push_back({name + ".conv.b", u.conv_b});
    params_.push_back({name + ".bn.g", u.bn_g});
    params_.push_back({name + ".bn.b", u.bn_b});
    params_.push_back({name + ".film.w", u.film_w});
    bn_states_.push_back(std::make_unique<BatchNormState<S>>(out_ch));
    bn_names_.push_back(name);
    units_.push_back(std::move(u));
  }

  void build(Rng& rng) {
    int L = static_cast<int>(cfg_.levels());
    for (int i = 0; i < L; ++i) {
      Index in_ch = i == 0 ? 1 : cfg_.ch(i - 1);
      Index ch = cfg_.ch(i);
      add_unit("enc" + std::to_string(i) + ".a", in_ch, ch, rng);
      add_unit("enc" + std::to_string(i) + ".b", ch, ch, rng);
      double bound = 1.0 / std::sqrt(static_cast<double>(ch * 4));
      down_w_.push_back(
          Tensor<S>::rand_uniform({ch, ch, 2, 2}, rng, -bound, bound).set_requires_grad());
      down_b_.push_back(Tensor<S>::zeros({ch}).set_requires_grad());
      params_.push_back({"down" + std::to_string(i) + ".w", down_w_.back()});
      params_.push_back({"down" + std::to_string(i) + ".b", down_b_.back()});
    }
    for (int j = L - 1; j >= 0; --j) {
      Index in_ch = j == L - 1 ? cfg_.ch(L - 1) : cfg_.ch(j + 1);
      Index ch = cfg_.ch(j);
      double bound = 1.0 / std::sqrt(static_cast<double>(in_ch * 4));
      up_w_.insert(up_w_.begin(),
                   Tensor<S>::rand_uniform({in_ch, ch, 2, 2}, rng, -bound, bound)
                       .set_requires_grad());
      up_b_.insert(up_b_.begin(), Tensor<S>::zeros({ch}).set_requires_grad());
    }
    for (int j = 0; j < L; ++j) {
      params_.push_back({"up" + std::to_string(j) + ".w", up_w_[static_cast<std::size_t>(j)]});
      params_.push_back({"up" + std::to_string(j) + ".b", up_b_[static_cast<std::size_t>(j)]});
    }
    for (int j = L - 1; j >= 0; --j) {
      Index ch = cfg_.ch(j);
      add_unit("dec" + std::to_string(j) + ".a", 2 * ch, ch, rng);
      add_unit("dec" + std::to_string(j) + ".b", ch, ch, rng);
    }
    out_w_ = Tensor<S>::trunc_normal({1, cfg_.ch(0), 1, 1}, rng, 0.02).set_requires_grad();
    out_b_ = Tensor<S>::zeros({1}).set_requires_grad();
    params_.push_back({"out.w", out_w_});
    params_.push_back({"out.b", out_b_});
  }

  SepConfig cfg_;
  std::vector<Unit> units_;  // enc0.a, enc0.b, ..., dec5.a, dec5.b, ..., dec0.b
  std::vector<std::unique_ptr<BatchNormState<S>>> bn_states_;
  std::vector<std::string> bn_names_;
  std::vector<Tensor<S>> down_w_, down_b_, up_w_, up_b_;
  Tensor<S> out_w_, out_b_;
  NamedParams<S> params_;
};

}  // namespace zss
