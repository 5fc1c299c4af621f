#pragma once

#include "zss/dsp.hpp"
#include "zss/nn.hpp"

namespace zss {

// Shifted-window token-semantic transformer for sound event detection.
// Mel input (T, F) is patch-embedded, reordered time->frequency->window into
// a 2-D token grid (windows stacked along the frequency axis), passed through
// four groups of swin blocks with patch merging in between, un-reordered and
// finished by a token-semantic convolution into a per-frame class featuremap.

struct SedConfig {
  Index patch_size = 4;       // P
  Index window_frames = 256;  // frames per time window
  Index embed_dim = 96;       // D
  std::vector<Index> depths = {2, 2, 6, 2};
  std::vector<Index> num_heads = {3, 6, 12, 24};
  Index attn_window = 8;  // M
  Index num_classes = 527;
  double mlp_ratio = 4.0;
  Index frames = 1024;   // T, includes pad rows
  Index mel_bins = 64;   // F

  static SedConfig paper(Index latent_dim = 768) {
    SedConfig c;
    c.embed_dim = latent_dim / 8;
    c.num_heads = {c.embed_dim / 32, c.embed_dim / 16, c.embed_dim / 8, c.embed_dim / 4};
    return c;
  }

  static SedConfig desk() {
    SedConfig c;
    c.embed_dim = 32;
    c.depths = {2, 2, 2, 2};
    c.num_heads = {2, 4, 8, 16};
    c.num_classes = 8;
    c.mlp_ratio = 2.0;
    c.mel_bins = 32;
    return c;
  }

  Index latent_dim() const { return 8 * embed_dim; }
  Index n_windows() const { return frames / window_frames; }       // n
  Index t_patches() const { return window_frames / patch_size; }   // t
  Index f_patches() const { return mel_bins / patch_size; }        // f
  Index fmap_frames() const { return frames / (8 * patch_size); }  // T'
  Index merge_factor() const { return 8 * patch_size; }

  Index group_dim(int g) const { return embed_dim << g; }
  Index group_rows(int g) const { return (n_windows() * f_patches()) >> g; }
  Index group_cols(int g) const { return t_patches() >> g; }

  void validate() const {
    check(patch_size >= 1 && frames >= 1 && mel_bins >= 1 && embed_dim >= 1,
          "SedConfig: dimensions must be positive");
    check(depths.size() == 4 && num_heads.size() == 4,
          "SedConfig: expected 4 groups of depths and heads");
    check(frames % window_frames == 0, "SedConfig: frames " + std::to_string(frames) +
                                           " not divisible by window_frames " +
                                           std::to_string(window_frames));
    check(window_frames % (8 * patch_size) == 0,
          "SedConfig: window_frames " + std::to_string(window_frames) +
              " not divisible by 8*patch_size " + std::to_string(8 * patch_size));
    check(mel_bins % patch_size == 0, "SedConfig: mel_bins " + std::to_string(mel_bins) +
                                          " not divisible by patch_size " +
                                          std::to_string(patch_size));
    for (int g = 0; g < 4; ++g) {
      check(group_dim(g) % num_heads[static_cast<std::size_t>(g)] == 0,
            "SedConfig: group " + std::to_string(g) + " dim not divisible by heads");
      Index rows = group_rows(g), cols = group_cols(g);
      check(rows >= 1 && cols >= 1, "SedConfig: token grid vanishes at group " +
                                        std::to_string(g));
      Index mh = std::min(attn_window, rows), mw = std::min(attn_window, cols);
      check(rows % mh == 0 && cols % mw == 0,
            "SedConfig: group " + std::to_string(g) + " grid " + std::to_string(rows) + "x" +
                std::to_string(cols) + " not divisible by attention window");
      if (g < 3)
        check(rows % 2 == 0 && cols % 2 == 0,
              "SedConfig: group " + std::to_string(g) + " grid has odd dimension; patch "
              "merge needs even rows and cols");
    }
  }
};

namespace detail {

// Relative position index table for an (mh, mw) window: w*w entries into a
// ((2mh-1)*(2mw-1)) bias table.
inline std::vector<Index> relative_position_index(Index mh, Index mw) {
  Index w = mh * mw;
  std::vector<Index> idx(static_cast<std::size_t>(w * w));
  for (Index p = 0; p < w; ++p) {
    Index r1 = p / mw, c1 = p % mw;
    for (Index q = 0; q < w; ++q) {
      Index r2 = q / mw, c2 = q % mw;
      Index rel = (r1 - r2 + mh - 1) * (2 * mw - 1) + (c1 - c2 + mw - 1);
      idx[static_cast<std::size_t>(p * w + q)] = rel;
    }
  }
  return idx;
}

// Additive mask (nW, w, w) for shifted windows: 0 within a region, -1e9
// across regions. Region labels follow the post-shift canvas layout.
template <class S>
Tensor<S> shifted_window_mask(Index rows, Index cols, Index mh, Index mw, Index sh,
                              Index sc) {
  std::vector<Index> region(static_cast<std::size_t>(rows * cols));
  auto row_region = [&](Index r) {
    if (sh == 0) return Index(0);
    if (r < rows - mh) return Index(0);
    return r < rows - sh ? Index(1) : Index(2);
  };
  auto col_region = [&](Index c) {
    if (sc == 0) return Index(0);
    if (c < cols - mw) return Index(0);
    return c < cols - sc ? Index(1) : Index(2);
  };
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c)
      region[static_cast<std::size_t>(r * cols + c)] = row_region(r) * 3 + col_region(c);

  Index nw = (rows / mh) * (cols / mw);
  Index w = mh * mw;
  Tensor<S> mask = Tensor<S>::zeros({nw, w, w});
  S* pm = mask.mutable_data().data();
  Index wi = 0;
  for (Index br = 0; br < rows / mh; ++br)
    for (Index bc = 0; bc < cols / mw; ++bc, ++wi) {
      std::vector<Index> ids(static_cast<std::size_t>(w));
      for (Index i = 0; i < mh; ++i)
        for (Index j = 0; j < mw; ++j)
          ids[static_cast<std::size_t>(i * mw + j)] =
              region[static_cast<std::size_t>((br * mh + i) * cols + (bc * mw + j))];
      for (Index p = 0; p < w; ++p)
        for (Index q = 0; q < w; ++q)
          pm[(wi * w + p) * w + q] = ids[static_cast<std::size_t>(p)] ==
                                             ids[static_cast<std::size_t>(q)]
                                         ? S(0)
                                         : S(-1e9);
    }
  return mask;
}

}  // namespace detail

template <class S>
class SwinBlock {
 public:
  SwinBlock() = default;

  SwinBlock(const SedConfig& cfg, int group, bool shifted, const std::string& prefix,
            Rng& rng)
      : dim_(cfg.group_dim(group)), heads_(cfg.num_heads[static_cast<std::size_t>(group)]),
        rows_(cfg.group_rows(group)), cols_(cfg.group_cols(group)), shifted_(shifted) {
    mh_ = std::min(cfg.attn_window, rows_);
    mw_ = std::min(cfg.attn_window, cols_);
    // Shift only along axes that hold more than one window.
    shift_r_ = shifted && rows_ > mh_ ? mh_ / 2 : 0;
    shift_c_ = shifted && cols_ > mw_ ? mw_ / 2 : 0;
    Index hidden = static_cast<Index>(cfg.mlp_ratio * dim_);

    ln1_g_ = Tensor<S>::full({dim_}, S(1)).set_requires_grad();
    ln1_b_ = Tensor<S>::zeros({dim_}).set_requires_grad();
    qkv_w_ = Tensor<S>::trunc_normal({3 * dim_, dim_}, rng, 0.02).set_requires_grad();
    qkv_b_ = Tensor<S>::zeros({3 * dim_}).set_requires_grad();
    proj_w_ = Tensor<S>::trunc_normal({dim_, dim_}, rng, 0.02).set_requires_grad();
    proj_b_ = Tensor<S>::zeros({dim_}).set_requires_grad();
    rel_bias_ = Tensor<S>::zeros({(2 * mh_ - 1) * (2 * mw_ - 1), heads_}).set_requires_grad();
    ln2_g_ = Tensor<S>::full({dim_}, S(1)).set_requires_grad();
    ln2_b_ = Tensor<S>::zeros({dim_}).set_requires_grad();
    fc1_w_ = Tensor<S>::trunc_normal({hidden, dim_}, rng, 0.02).set_requires_grad();
    fc1_b_ = Tensor<S>::zeros({hidden}).set_requires_grad();
    fc2_w_ = Tensor<S>::trunc_normal({dim_, hidden}, rng, 0.02).set_requires_grad();
    fc2_b_ = Tensor<S>::zeros({dim_}).set_requires_grad();

    rel_index_ = detail::relative_position_index(mh_, mw_);
    if (shift_r_ > 0 || shift_c_ > 0)
      attn_mask_ = detail::shifted_window_mask<S>(rows_, cols_, mh_, mw_, shift_r_, shift_c_);

    collect(prefix);
  }

  /// x: (N, rows, cols, dim)
  Tensor<S> forward(const Tensor<S>& x) const {
    check(x.rank() == 4 && x.dim(1) == rows_ && x.dim(2) == cols_ && x.dim(3) == dim_,
          "swin_block: input " + shape_str(x.shape()) + " does not match grid (" +
              std::to_string(rows_) + ", " + std::to_string(cols_) + ", " +
              std::to_string(dim_) + ")");
    Index N = x.dim(0);
    Index nw = (rows_ / mh_) * (cols_ / mw_);
    Index w = mh_ * mw_;
    Index hd = dim_ / heads_;

    Tensor<S> h = layer_norm(x, ln1_g_, ln1_b_);
    if (shift_r_ > 0 || shift_c_ > 0) h = roll2d(h, -shift_r_, -shift_c_);

    // Window partition -> (N*nW, w, dim)
    h = reshape(h, {N, rows_ / mh_, mh_, cols_ / mw_, mw_, dim_});
    h = permute(h, {0, 1, 3, 2, 4, 5});
    h = reshape(h, {N * nw, w, dim_});

    Tensor<S> qkv = linear(h, qkv_w_, &qkv_b_);  // (B', w, 3*dim)
    qkv = reshape(qkv, {N * nw, w, 3, heads_, hd});
    qkv = permute(qkv, {2, 0, 3, 1, 4});  // (3, B', heads, w, hd)
    auto take = [&](Index i) {
      return reshape(slice(qkv, {i, 0, 0, 0, 0}, {1, N * nw, heads_, w, hd}),
                     {N * nw * heads_, w, hd});
    };
    Tensor<S> q = take(0), k = take(1), v = take(2);

    Tensor<S> scores = matmul(q, permute(k, {0, 2, 1}));
    scores = mul_scalar(scores, static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd))));
    scores = reshape(scores, {N, nw, heads_, w, w});

    Tensor<S> bias = index_select(rel_bias_, rel_index_);      // (w*w, heads)
    bias = permute(reshape(bias, {w, w, heads_}), {2, 0, 1});  // (heads, w, w)
    scores = add(scores, reshape(bias, {1, 1, heads_, w, w}));
    if (attn_mask_.numel() > 0)
      scores = add(scores, reshape(attn_mask_, {1, nw, 1, w, w}));

    Tensor<S> attn = softmax_lastdim(reshape(scores, {N * nw * heads_, w, w}));
    Tensor<S> out = matmul(attn, v);  // (B'*heads, w, hd)
    out = reshape(out, {N * nw, heads_, w, hd});
    out = permute(out, {0, 2, 1, 3});
    out = reshape(out, {N * nw, w, dim_});
    out = linear(out, proj_w_, &proj_b_);

    // Un-partition
    out = reshape(out, {N, rows_ / mh_, cols_ / mw_, mh_, mw_, dim_});
    out = permute(out, {0, 1, 3, 2, 4, 5});
    out = reshape(out, {N, rows_, cols_, dim_});
    if (shift_r_ > 0 || shift_c_ > 0) out = roll2d(out, shift_r_, shift_c_);

    Tensor<S> y = add(x, out);
    Tensor<S> m = layer_norm(y, ln2_g_, ln2_b_);
    m = linear(gelu(linear(m, fc1_w_, &fc1_b_)), fc2_w_, &fc2_b_);
    return add(y, m);
  }

  NamedParams<S>& params() { return params_; }
  const Tensor<S>& attention_mask() const { return attn_mask_; }
  Index window_h() const { return mh_; }
  Index window_w() const { return mw_; }
  bool shifts() const { return shift_r_ > 0 || shift_c_ > 0; }

 private:
  void collect(const std::string& p) {
    params_ = {{p + ".ln1.g", ln1_g_},   {p + ".ln1.b", ln1_b_},
               {p + ".qkv.w", qkv_w_},   {p + ".qkv.b", qkv_b_},
               {p + ".proj.w", proj_w_}, {p + ".proj.b", proj_b_},
               {p + ".rel_bias", rel_bias_},
               {p + ".ln2.g", ln2_g_},   {p + ".ln2.b", ln2_b_},
               {p + ".fc1.w", fc1_w_},   {p + ".fc1.b", fc1_b_},
               {p + ".fc2.w", fc2_w_},   {p + ".fc2.b", fc2_b_}};
  }

  Index dim_ = 0, heads_ = 0, rows_ = 0, cols_ = 0;
  Index mh_ = 0, mw_ = 0, shift_r_ = 0, shift_c_ = 0;
  bool shifted_ = false;
  Tensor<S> ln1_g_, ln1_b_, qkv_w_, qkv_b_, proj_w_, proj_b_, rel_bias_;
  Tensor<S> ln2_g_, ln2_b_, fc1_w_, fc1_b_, fc2_w_, fc2_b_;
  Tensor<S> attn_mask_;
  std::vector<Index> rel_index_;
  NamedParams<S> params_;
};

template <class S>
class StSed {
 public:
  explicit StSed(SedConfig cfg, std::uint64_t seed = 1) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, 0x5ed));
    build(rng);
  }

  const SedConfig& config() const { return cfg_; }
  NamedParams<S>& params() { return params_; }
  const NamedParams<S>& params() const { return params_; }

  struct Output {
    Tensor<S> featuremap;  // (N, T', C) probabilities
    Tensor<S> final_grid;  // (N, T', F', 8D) pre-head features
  };

  /// mel: (N, T, F) log-mel batch.
  Output forward(const Tensor<S>& mel) const {
    check(mel.rank() == 3 && mel.dim(1) == cfg_.frames && mel.dim(2) == cfg_.mel_bins,
          "sed: mel batch " + shape_str(mel.shape()) + " does not match config (T=" +
              std::to_string(cfg_.frames) + ", F=" + std::to_string(cfg_.mel_bins) + ")");
    Index N = mel.dim(0);
    Tensor<S> grid = patch_embed(mel);  // (N, T/P, F/P, D)
    grid = reorder(grid);               // (N, n*f, t, D)
    for (int g = 0; g < 4; ++g) {
      for (const auto& blk : blocks_[static_cast<std::size_t>(g)]) grid = blk.forward(grid);
      if (g < 3) grid = merge(grid, g);
    }
    Tensor<S> feat = unreorder(grid);  // (N, T', F', 8D)

    // Token-semantic head: conv (3, F') pad (1, 0), channels 8D -> C, sigmoid.
    Tensor<S> h = permute(feat, {0, 3, 1, 2});  // (N, 8D, T', F')
    h = conv2d(h, head_w_, &head_b_, 1, 1, 1, 0);  // (N, C, T', 1)
    h = reshape(h, {N, cfg_.num_classes, cfg_.fmap_frames()});
    Tensor<S> fmap = sigmoid(permute(h, {0, 2, 1}));  // (N, T', C)
    return {fmap, feat};
  }

  /// Patch embedding: P x P conv, stride P, then layer norm over channels.
  Tensor<S> patch_embed(const Tensor<S>& mel) const {
    Index N = mel.dim(0);
    Tensor<S> x = reshape(mel, {N, 1, cfg_.frames, cfg_.mel_bins});
    x = conv2d(x, patch_w_, &patch_b_, cfg_.patch_size, cfg_.patch_size, 0, 0);
    x = permute(x, {0, 2, 3, 1});  // (N, T/P, F/P, D)
    return layer_norm(x, patch_ln_g_, patch_ln_b_);
  }

  /// (N, T/P, F/P, D) -> (N, n*f, t, D); token order time -> frequency ->
  /// window, windows stacked along the row (frequency) axis.
  Tensor<S> reorder(const Tensor<S>& grid) const {
    Index N = grid.dim(0), D = grid.dim(3);
    Index n = cfg_.n_windows(), t = cfg_.t_patches(), f = cfg_.f_patches();
    Tensor<S> x = reshape(grid, {N, n, t, f, D});
    x = permute(x, {0, 1, 3, 2, 4});
    return reshape(x, {N, n * f, t, D});
  }

  /// Exact inverse of reorder at the same resolution.
  Tensor<S> inverse_reorder(const Tensor<S>& grid) const {
    Index N = grid.dim(0), D = grid.dim(3);
    Index n = cfg_.n_windows(), t = cfg_.t_patches(), f = cfg_.f_patches();
    Tensor<S> x = reshape(grid, {N, n, f, t, D});
    x = permute(x, {0, 1, 3, 2, 4});
    return reshape(x, {N, n * t, f, D});
  }

  /// Final-group grid (N, n*f/8, t/8, 8D) -> (N, T', F', 8D), time monotone
  /// along axis 1.
  Tensor<S> unreorder(const Tensor<S>& grid) const {
    Index N = grid.dim(0), D8 = grid.dim(3);
    Index n = cfg_.n_windows(), t8 = cfg_.t_patches() / 8, f8 = cfg_.f_patches() / 8;
    check(grid.dim(1) == n * f8 && grid.dim(2) == t8,
          "sed: final grid " + shape_str(grid.shape()) + " unexpected");
    Tensor<S> x = reshape(grid, {N, n, f8, t8, D8});
    x = permute(x, {0, 1, 3, 2, 4});
    return reshape(x, {N, n * t8, f8, D8});
  }

  /// Time-mean of the featuremap -> clip probabilities (N, C).
  Tensor<S> clip_probabilities(const Tensor<S>& fmap) const { return mean(fmap, {1}); }

  /// Latent source embedding: mean of the pre-head grid over frequency then
  /// time, restricted to the first valid_frames featuremap rows.
  Tensor<S> latent_embedding(const Tensor<S>& final_grid, Index valid_frames = -1) const {
    Index N = final_grid.dim(0);
    Index tp = final_grid.dim(1), fp = final_grid.dim(2), d = final_grid.dim(3);
    if (valid_frames < 0) valid_frames = tp;
    check(valid_frames >= 1 && valid_frames <= tp,
          "latent_embedding: valid_frames " + std::to_string(valid_frames) +
              " outside featuremap of " + std::to_string(tp) + " frames");
    Tensor<S> g = valid_frames == tp
                      ? final_grid
                      : slice(final_grid, {0, 0, 0, 0}, {N, valid_frames, fp, d});
    return mean(mean(g, {2}), {1});  // frequency first, then time
  }

  /// Featuremap rows covered by a clip of `samples` content samples.
  Index valid_fmap_frames(Index content_samples, const DspConfig& dsp) const {
    Index frames = dsp.content_frames(content_samples);
    Index valid = (frames + cfg_.merge_factor() - 1) / cfg_.merge_factor();
    return std::min(valid, cfg_.fmap_frames());
  }

  const SwinBlock<S>& block(int group, int i) const {
    return blocks_[static_cast<std::size_t>(group)][static_cast<std::size_t>(i)];
  }

  /// Zeroes every attention/MLP projection so each block reduces to the
  /// identity map; used by tests.
  void zero_block_weights() {
    for (auto& group : blocks_)
      for (auto& blk : group)
        for (auto& [name, p] : blk.params())
          if (name.find(".qkv.") != std::string::npos ||
              name.find(".proj.") != std::string::npos ||
              name.find(".fc") != std::string::npos)
            std::fill(p.mutable_data().begin(), p.mutable_data().end(), S(0));
  }

 private:
  void build(Rng& rng) {
    Index P = cfg_.patch_size, D = cfg_.embed_dim, C = cfg_.num_classes;
    patch_w_ = Tensor<S>::rand_uniform({D, 1, P, P}, rng, -0.1, 0.1).set_requires_grad();
    patch_b_ = Tensor<S>::zeros({D}).set_requires_grad();
    patch_ln_g_ = Tensor<S>::full({D}, S(1)).set_requires_grad();
    patch_ln_b_ = Tensor<S>::zeros({D}).set_requires_grad();
    params_ = {{"patch.w", patch_w_},
               {"patch.b", patch_b_},
               {"patch.ln.g", patch_ln_g_},
               {"patch.ln.b", patch_ln_b_}};

    for (int g = 0; g < 4; ++g) {
      std::vector<SwinBlock<S>> group;
      for (Index b = 0; b < cfg_.depths[static_cast<std::size_t>(g)]; ++b) {
        std::string prefix = "group" + std::to_string(g) + ".block" + std::to_string(b);
        group.emplace_back(cfg_, g, b % 2 == 1, prefix, rng);
        for (auto& kv : group.back().params()) params_.push_back(kv);
      }
      blocks_.push_back(std::move(group));
      if (g < 3) {
        Index dim = cfg_.group_dim(g);
        Tensor<S> mg = Tensor<S>::full({4 * dim}, S(1)).set_requires_grad();
        Tensor<S> mb = Tensor<S>::zeros({4 * dim}).set_requires_grad();
        Tensor<S> mw =
            Tensor<S>::trunc_normal({2 * dim, 4 * dim}, rng, 0.02).set_requires_grad();
        std::string prefix = "merge" + std::to_string(g);
        params_.push_back({prefix + ".ln.g", mg});
        params_.push_back({prefix + ".ln.b", mb});
        params_.push_back({prefix + ".w", mw});
        merge_ln_g_.push_back(mg);
        merge_ln_b_.push_back(mb);
        merge_w_.push_back(mw);
      }
    }

    Index fp8 = cfg_.f_patches() / 8;
    head_w_ = Tensor<S>::trunc_normal({C, cfg_.latent_dim(), 3, fp8}, rng, 0.02)
                  .set_requires_grad();
    head_b_ = Tensor<S>::zeros({C}).set_requires_grad();
    params_.push_back({"head.w", head_w_});
    params_.push_back({"head.b", head_b_});
  }

  /// 2x2 neighborhood concat -> LN -> linear 4*dim -> 2*dim.
  Tensor<S> merge(const Tensor<S>& x, int g) const {
    Index N = x.dim(0), R = x.dim(1), C = x.dim(2), D = x.dim(3);
    check(R % 2 == 0 && C % 2 == 0,
          "patch_merge: odd grid " + shape_str(x.shape()) + " cannot be merged");
    Tensor<S> h = reshape(x, {N, R / 2, 2, C / 2, 2, D});
    h = permute(h, {0, 1, 3, 2, 4, 5});
    h = reshape(h, {N, R / 2, C / 2, 4 * D});
    h = layer_norm(h, merge_ln_g_[static_cast<std::size_t>(g)],
                   merge_ln_b_[static_cast<std::size_t>(g)]);
    return linear(h, merge_w_[static_cast<std::size_t>(g)]);
  }

  SedConfig cfg_;
  Tensor<S> patch_w_, patch_b_, patch_ln_g_, patch_ln_b_;
  std::vector<std::vector<SwinBlock<S>>> blocks_;
  std::vector<Tensor<S>> merge_ln_g_, merge_ln_b_, merge_w_;
  Tensor<S> head_w_, head_b_;
  NamedParams<S> params_;
};

}  // namespace zss
