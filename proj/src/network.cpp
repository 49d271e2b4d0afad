#include "mfhg/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "mfhg/errors.hpp"

namespace mfhg {

namespace {

void validate_config(const HourglassConfig& c) {
  if (c.depth < 1 || c.depth > 8)
    throw std::invalid_argument("HourglassConfig: depth out of range");
  if (c.base_channels < 1 || c.base_channels > 512)
    throw std::invalid_argument("HourglassConfig: base_channels out of range");
}

int up_conv_idx(const HourglassConfig& c, int level) {
  return 2 * c.depth + 2 + 3 * (c.depth - 1 - level);
}
int merge_conv_idx(const HourglassConfig& c, int level) {
  return up_conv_idx(c, level) + 1;
}
int refine_conv_idx(const HourglassConfig& c, int level) {
  return up_conv_idx(c, level) + 2;
}
int head_conv_idx(const HourglassConfig& c) { return 5 * c.depth + 2; }

}  // namespace

std::vector<ConvSpec> conv_specs(const HourglassConfig& config) {
  validate_config(config);
  const int d = config.depth;
  const int base = config.base_channels;
  auto ch = [&](int level) { return base << level; };

  std::vector<ConvSpec> specs;
  specs.reserve(config.n_convs());
  for (int k = 0; k < d; ++k) {
    specs.push_back({k == 0 ? HourglassConfig::in_channels : ch(k - 1), ch(k)});
    specs.push_back({ch(k), ch(k)});
  }
  specs.push_back({ch(d - 1), ch(d)});
  specs.push_back({ch(d), ch(d)});
  for (int k = d - 1; k >= 0; --k) {
    specs.push_back({ch(k + 1), ch(k)});
    specs.push_back({2 * ch(k), ch(k)});
    specs.push_back({ch(k), ch(k)});
  }
  specs.push_back({base, config.out_channels()});
  return specs;
}

std::size_t Parameters::scalar_count() const {
  std::size_t n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

Parameters init_parameters(const HourglassConfig& config, Rng& rng) {
  const auto specs = conv_specs(config);
  Parameters p;
  p.config = config;
  p.weights.reserve(specs.size());
  p.biases.reserve(specs.size());
  for (const ConvSpec& s : specs) {
    const double fan_in = 9.0 * s.in_c;
    const double fan_out = 9.0 * s.out_c;
    std::normal_distribution<double> dist(0.0,
                                          std::sqrt(2.0 / (fan_in + fan_out)));
    std::vector<float> w(static_cast<std::size_t>(9) * s.in_c * s.out_c);
    for (float& v : w) v = static_cast<float>(dist(rng));
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(s.out_c, 0.0f);
  }
  return p;
}

Gradients zero_gradients(const Parameters& params) {
  Gradients g;
  g.weights.reserve(params.weights.size());
  g.biases.reserve(params.biases.size());
  for (const auto& w : params.weights) g.weights.emplace_back(w.size(), 0.0);
  for (const auto& b : params.biases) g.biases.emplace_back(b.size(), 0.0);
  return g;
}

Tensor stack_pair(const SourcePair& pair) {
  if (pair.a.empty() || pair.b.empty())
    throw std::invalid_argument("stack_pair: empty source image");
  if (!pair.a.same_shape(pair.b))
    throw std::invalid_argument("stack_pair: source dimensions mismatch");
  if (pair.a.channels() != 3)
    throw std::invalid_argument("stack_pair: sources must be RGB");
  const int h = pair.a.height(), w = pair.a.width();
  Tensor t(h, w, 6);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        t.at(y, x, c) = pair.a.at(y, x, c);
        t.at(y, x, c + 3) = pair.b.at(y, x, c);
      }
  return t;
}

namespace {

std::vector<double> to_double(const std::vector<float>& v) {
  return std::vector<double>(v.begin(), v.end());
}

Tensor conv3x3(const Tensor& in, const std::vector<float>& wf,
               const std::vector<float>& bf, int out_c, bool relu) {
  const int h = in.h, w = in.w, ci = in.c;
  const std::vector<double> wd = to_double(wf);
  const std::vector<double> bd = to_double(bf);
  Tensor out(h, w, out_c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double* acc = &out.at(y, x, 0);
      std::memcpy(acc, bd.data(), sizeof(double) * out_c);
      for (int ky = 0; ky < 3; ++ky) {
        const int yy = y + ky - 1;
        if (yy < 0 || yy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int xx = x + kx - 1;
          if (xx < 0 || xx >= w) continue;
          const double* ip = &in.at(yy, xx, 0);
          const double* wp = &wd[static_cast<std::size_t>((ky * 3 + kx) * ci) *
                                 out_c];
          for (int a = 0; a < ci; ++a) {
            const double iv = ip[a];
            const double* wr = wp + static_cast<std::size_t>(a) * out_c;
            for (int b = 0; b < out_c; ++b) acc[b] += iv * wr[b];
          }
        }
      }
      if (relu)
        for (int b = 0; b < out_c; ++b)
          if (acc[b] < 0.0) acc[b] = 0.0;
    }
  }
  return out;
}

// Accumulates dW/db and returns dInput.
Tensor conv3x3_backward(const Tensor& in, const Tensor& g_out,
                        const std::vector<float>& wf, std::vector<double>& dw,
                        std::vector<double>& db) {
  const int h = in.h, w = in.w, ci = in.c, co = g_out.c;
  const std::vector<double> wd = to_double(wf);
  Tensor g_in(h, w, ci);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double* go = &g_out.at(y, x, 0);
      for (int b = 0; b < co; ++b) db[b] += go[b];
      for (int ky = 0; ky < 3; ++ky) {
        const int yy = y + ky - 1;
        if (yy < 0 || yy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int xx = x + kx - 1;
          if (xx < 0 || xx >= w) continue;
          const double* ip = &in.at(yy, xx, 0);
          double* gip = &g_in.at(yy, xx, 0);
          const std::size_t off =
              static_cast<std::size_t>((ky * 3 + kx) * ci) * co;
          const double* wp = &wd[off];
          double* dwp = &dw[off];
          for (int a = 0; a < ci; ++a) {
            const double iv = ip[a];
            const double* wr = wp + static_cast<std::size_t>(a) * co;
            double* dwr = dwp + static_cast<std::size_t>(a) * co;
            double acc = 0.0;
            for (int b = 0; b < co; ++b) {
              dwr[b] += iv * go[b];
              acc += wr[b] * go[b];
            }
            gip[a] += acc;
          }
        }
      }
    }
  }
  return g_in;
}

Tensor max_pool2(const Tensor& in, std::vector<int>* argmax) {
  const int oh = in.h / 2, ow = in.w / 2, c = in.c;
  Tensor out(oh, ow, c);
  if (argmax) argmax->assign(out.size(), 0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double best = -std::numeric_limits<double>::infinity();
        int best_idx = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int yy = 2 * y + dy, xx = 2 * x + dx;
            const double v = in.at(yy, xx, ch);
            if (v > best) {  // first winner kept on ties
              best = v;
              best_idx =
                  (static_cast<int>(static_cast<std::size_t>(yy) * in.w + xx)) *
                      c +
                  ch;
            }
          }
        out.at(y, x, ch) = best;
        if (argmax)
          (*argmax)[(static_cast<std::size_t>(y) * ow + x) * c + ch] = best_idx;
      }
    }
  }
  return out;
}

Tensor max_pool2_backward(const Tensor& g_out, const std::vector<int>& argmax,
                          int in_h, int in_w) {
  Tensor g_in(in_h, in_w, g_out.c);
  for (std::size_t i = 0; i < g_out.size(); ++i)
    g_in.v[argmax[i]] += g_out.v[i];
  return g_in;
}

Tensor upsample2(const Tensor& in) {
  Tensor out(in.h * 2, in.w * 2, in.c);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) {
      const double* src = &in.at(y / 2, x / 2, 0);
      double* dst = &out.at(y, x, 0);
      std::memcpy(dst, src, sizeof(double) * in.c);
    }
  return out;
}

Tensor upsample2_backward(const Tensor& g_out) {
  Tensor g_in(g_out.h / 2, g_out.w / 2, g_out.c);
  for (int y = 0; y < g_out.h; ++y)
    for (int x = 0; x < g_out.w; ++x) {
      double* dst = &g_in.at(y / 2, x / 2, 0);
      const double* src = &g_out.at(y, x, 0);
      for (int c = 0; c < g_out.c; ++c) dst[c] += src[c];
    }
  return g_in;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  Tensor out(a.h, a.w, a.c + b.c);
  for (int y = 0; y < a.h; ++y)
    for (int x = 0; x < a.w; ++x) {
      std::memcpy(&out.at(y, x, 0), &a.at(y, x, 0), sizeof(double) * a.c);
      std::memcpy(&out.at(y, x, a.c), &b.at(y, x, 0), sizeof(double) * b.c);
    }
  return out;
}

void split_channels(const Tensor& g, int c_first, Tensor& g_first,
                    Tensor& g_second) {
  g_first = Tensor(g.h, g.w, c_first);
  g_second = Tensor(g.h, g.w, g.c - c_first);
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) {
      std::memcpy(&g_first.at(y, x, 0), &g.at(y, x, 0),
                  sizeof(double) * c_first);
      std::memcpy(&g_second.at(y, x, 0), &g.at(y, x, c_first),
                  sizeof(double) * (g.c - c_first));
    }
}

Tensor relu_backward(const Tensor& g, const Tensor& post_relu) {
  Tensor out = g;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (post_relu.v[i] <= 0.0) out.v[i] = 0.0;
  return out;
}

Tensor softmax_channels(const Tensor& in) {
  Tensor out(in.h, in.w, in.c);
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < in.w; ++x) {
      const double* v = &in.at(y, x, 0);
      double m = v[0];
      for (int c = 1; c < in.c; ++c) m = std::max(m, v[c]);
      double sum = 0.0;
      double* o = &out.at(y, x, 0);
      for (int c = 0; c < in.c; ++c) {
        o[c] = std::exp(v[c] - m);
        sum += o[c];
      }
      for (int c = 0; c < in.c; ++c) o[c] /= sum;
    }
  return out;
}

Tensor softmax_backward(const Tensor& g, const Tensor& probs) {
  Tensor out(g.h, g.w, g.c);
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) {
      const double* gp = &g.at(y, x, 0);
      const double* zp = &probs.at(y, x, 0);
      double dot = 0.0;
      for (int c = 0; c < g.c; ++c) dot += gp[c] * zp[c];
      double* o = &out.at(y, x, 0);
      for (int c = 0; c < g.c; ++c) o[c] = zp[c] * (gp[c] - dot);
    }
  return out;
}

Tensor pad_reflect(const Tensor& in, int out_h, int out_w) {
  Tensor out(out_h, out_w, in.c);
  for (int y = 0; y < out_h; ++y) {
    const int sy = reflect_index(y, in.h);
    for (int x = 0; x < out_w; ++x) {
      const int sx = reflect_index(x, in.w);
      std::memcpy(&out.at(y, x, 0), &in.at(sy, sx, 0), sizeof(double) * in.c);
    }
  }
  return out;
}

Tensor crop(const Tensor& in, int h, int w) {
  Tensor out(h, w, in.c);
  for (int y = 0; y < h; ++y)
    std::memcpy(&out.at(y, 0, 0), &in.at(y, 0, 0),
                sizeof(double) * in.c * w);
  return out;
}

Tensor embed(const Tensor& g, int out_h, int out_w) {
  Tensor out(out_h, out_w, g.c);
  for (int y = 0; y < g.h; ++y)
    std::memcpy(&out.at(y, 0, 0), &g.at(y, 0, 0), sizeof(double) * g.c * g.w);
  return out;
}

struct ConvRunner {
  const Parameters& params;
  ActivationCache* cache;

  Tensor run(int idx, const Tensor& in, bool relu) {
    Tensor out = conv3x3(in, params.weights[idx], params.biases[idx],
                         static_cast<int>(params.biases[idx].size()), relu);
    if (cache) {
      cache->conv_in[idx] = in;
      cache->conv_out[idx] = out;
    }
    return out;
  }
};

}  // namespace

Tensor forward(const Parameters& params, const SourcePair& pair,
               ActivationCache* cache) {
  validate_config(params.config);
  Tensor x = stack_pair(pair);
  for (double v : x.v)
    if (!std::isfinite(v))
      throw std::invalid_argument("forward: non-finite input");

  const HourglassConfig& cfg = params.config;
  const int d = cfg.depth;
  const int mult = 1 << d;
  const int in_h = x.h, in_w = x.w;
  const int pad_h = (in_h + mult - 1) / mult * mult;
  const int pad_w = (in_w + mult - 1) / mult * mult;
  if (pad_h != in_h || pad_w != in_w) x = pad_reflect(x, pad_h, pad_w);

  if (cache) {
    cache->config = cfg;
    cache->in_h = in_h;
    cache->in_w = in_w;
    cache->pad_h = pad_h;
    cache->pad_w = pad_w;
    cache->conv_in.assign(cfg.n_convs(), Tensor());
    cache->conv_out.assign(cfg.n_convs(), Tensor());
    cache->pool_argmax.assign(d, {});
    cache->pool_in_shape.assign(d, Tensor());
  }
  ConvRunner conv{params, cache};

  std::vector<Tensor> enc(d);
  for (int k = 0; k < d; ++k) {
    x = conv.run(2 * k, x, true);
    x = conv.run(2 * k + 1, x, true);
    enc[k] = x;
    if (cache) {
      cache->pool_in_shape[k].h = x.h;
      cache->pool_in_shape[k].w = x.w;
      cache->pool_in_shape[k].c = x.c;
    }
    x = max_pool2(x, cache ? &cache->pool_argmax[k] : nullptr);
  }
  x = conv.run(2 * d, x, true);
  x = conv.run(2 * d + 1, x, true);
  for (int k = d - 1; k >= 0; --k) {
    x = upsample2(x);
    x = conv.run(up_conv_idx(cfg, k), x, true);
    x = concat_channels(x, enc[k]);
    x = conv.run(merge_conv_idx(cfg, k), x, true);
    x = conv.run(refine_conv_idx(cfg, k), x, true);
  }
  x = conv.run(head_conv_idx(cfg), x, false);
  if (cfg.head == Head::Seg) {
    x = softmax_channels(x);
    if (cache) cache->softmax_out = x;
  }
  if (pad_h != in_h || pad_w != in_w) x = crop(x, in_h, in_w);
  return x;
}

Gradients backward(const Parameters& params, const ActivationCache& cache,
                   const Tensor& output_gradient) {
  const HourglassConfig& cfg = params.config;
  if (!(cache.config == cfg))
    throw std::invalid_argument("backward: cache/params config mismatch");
  if (output_gradient.h != cache.in_h || output_gradient.w != cache.in_w ||
      output_gradient.c != cfg.out_channels())
    throw std::invalid_argument("backward: output gradient shape mismatch");
  if (cache.conv_in.size() != static_cast<std::size_t>(cfg.n_convs()) ||
      cache.conv_in[0].size() == 0)
    throw std::invalid_argument("backward: cache not produced by forward");

  const int d = cfg.depth;
  Gradients grads = zero_gradients(params);

  auto conv_back = [&](int idx, const Tensor& g) {
    return conv3x3_backward(cache.conv_in[idx], g, params.weights[idx],
                            grads.weights[idx], grads.biases[idx]);
  };

  Tensor g = output_gradient;
  if (cache.pad_h != cache.in_h || cache.pad_w != cache.in_w)
    g = embed(g, cache.pad_h, cache.pad_w);
  if (cfg.head == Head::Seg) g = softmax_backward(g, cache.softmax_out);
  g = conv_back(head_conv_idx(cfg), g);

  std::vector<Tensor> skip_grad(d);
  for (int k = 0; k < d; ++k) {
    g = relu_backward(g, cache.conv_out[refine_conv_idx(cfg, k)]);
    g = conv_back(refine_conv_idx(cfg, k), g);
    g = relu_backward(g, cache.conv_out[merge_conv_idx(cfg, k)]);
    g = conv_back(merge_conv_idx(cfg, k), g);
    Tensor g_up, g_skip;
    split_channels(g, g.c / 2, g_up, g_skip);
    skip_grad[k] = std::move(g_skip);
    g_up = relu_backward(g_up, cache.conv_out[up_conv_idx(cfg, k)]);
    g = conv_back(up_conv_idx(cfg, k), g_up);
    g = upsample2_backward(g);
  }

  g = relu_backward(g, cache.conv_out[2 * d + 1]);
  g = conv_back(2 * d + 1, g);
  g = relu_backward(g, cache.conv_out[2 * d]);
  g = conv_back(2 * d, g);

  for (int k = d - 1; k >= 0; --k) {
    g = max_pool2_backward(g, cache.pool_argmax[k], cache.pool_in_shape[k].h,
                           cache.pool_in_shape[k].w);
    for (std::size_t i = 0; i < g.size(); ++i) g.v[i] += skip_grad[k].v[i];
    g = relu_backward(g, cache.conv_out[2 * k + 1]);
    g = conv_back(2 * k + 1, g);
    g = relu_backward(g, cache.conv_out[2 * k]);
    g = conv_back(2 * k, g);
  }
  return grads;
}

AdamState AdamState::create(const Parameters& params, double lr) {
  AdamState s;
  s.lr = lr;
  for (const auto& w : params.weights) {
    s.m_w.emplace_back(w.size(), 0.0);
    s.v_w.emplace_back(w.size(), 0.0);
  }
  for (const auto& b : params.biases) {
    s.m_b.emplace_back(b.size(), 0.0);
    s.v_b.emplace_back(b.size(), 0.0);
  }
  return s;
}

namespace {

void adam_update(std::vector<float>& p, const std::vector<double>& g,
                 std::vector<double>& m, std::vector<double>& v,
                 const AdamState& s, double bc1, double bc2) {
  if (p.size() != g.size())
    throw std::invalid_argument("adam_step: gradient shape mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    p[i] = static_cast<float>(static_cast<double>(p[i]) -
                              s.lr * m_hat / (std::sqrt(v_hat) + s.epsilon));
  }
}

}  // namespace

void adam_step(Parameters& params, const Gradients& grads, AdamState& state) {
  if (grads.weights.size() != params.weights.size() ||
      state.m_w.size() != params.weights.size())
    throw std::invalid_argument("adam_step: layer count mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, state.step);
  const double bc2 = 1.0 - std::pow(state.beta2, state.step);
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    adam_update(params.weights[l], grads.weights[l], state.m_w[l],
                state.v_w[l], state, bc1, bc2);
    adam_update(params.biases[l], grads.biases[l], state.m_b[l], state.v_b[l],
                state, bc1, bc2);
  }
}

namespace {

constexpr char kMagic[5] = {'M', 'F', 'H', 'G', '1'};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_u32(std::FILE* f, std::uint32_t v) {
  std::uint8_t b[4] = {static_cast<std::uint8_t>(v),
                       static_cast<std::uint8_t>(v >> 8),
                       static_cast<std::uint8_t>(v >> 16),
                       static_cast<std::uint8_t>(v >> 24)};
  if (std::fwrite(b, 1, 4, f) != 4) throw IoError("checkpoint write failed");
}

std::uint32_t read_u32(std::FILE* f, const std::string& path) {
  std::uint8_t b[4];
  if (std::fread(b, 1, 4, f) != 4)
    throw FormatError("truncated checkpoint header: " + path);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const Parameters& params, const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot open checkpoint for writing: " + path);
  if (std::fwrite(kMagic, 1, 5, f.get()) != 5)
    throw IoError("checkpoint write failed");
  write_u32(f.get(), static_cast<std::uint32_t>(params.config.depth));
  write_u32(f.get(), static_cast<std::uint32_t>(params.config.base_channels));
  write_u32(f.get(), params.config.head == Head::Seg ? 0u : 1u);
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const auto& w = params.weights[l];
    const auto& b = params.biases[l];
    if (std::fwrite(w.data(), sizeof(float), w.size(), f.get()) != w.size() ||
        std::fwrite(b.data(), sizeof(float), b.size(), f.get()) != b.size())
      throw IoError("checkpoint write failed: " + path);
  }
}

Parameters load_checkpoint(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open checkpoint for reading: " + path);
  char magic[5];
  if (std::fread(magic, 1, 5, f.get()) != 5 ||
      std::memcmp(magic, kMagic, 5) != 0)
    throw FormatError("bad checkpoint magic: " + path);

  HourglassConfig cfg;
  cfg.depth = static_cast<int>(read_u32(f.get(), path));
  cfg.base_channels = static_cast<int>(read_u32(f.get(), path));
  const std::uint32_t head = read_u32(f.get(), path);
  if (head > 1) throw FormatError("bad checkpoint head id: " + path);
  cfg.head = head == 0 ? Head::Seg : Head::Reg;
  if (cfg.depth < 1 || cfg.depth > 8 || cfg.base_channels < 1 ||
      cfg.base_channels > 512)
    throw FormatError("bad checkpoint config: " + path);

  const auto specs = conv_specs(cfg);
  Parameters p;
  p.config = cfg;
  for (const ConvSpec& s : specs) {
    std::vector<float> w(static_cast<std::size_t>(9) * s.in_c * s.out_c);
    std::vector<float> b(s.out_c);
    if (std::fread(w.data(), sizeof(float), w.size(), f.get()) != w.size() ||
        std::fread(b.data(), sizeof(float), b.size(), f.get()) != b.size())
      throw FormatError("checkpoint tensor data truncated: " + path);
    for (float v : w)
      if (!std::isfinite(v))
        throw FormatError("checkpoint holds non-finite weights: " + path);
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  char extra;
  if (std::fread(&extra, 1, 1, f.get()) == 1)
    throw FormatError("checkpoint has trailing data: " + path);
  return p;
}

}  // namespace mfhg
