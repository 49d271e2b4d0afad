#include "mfhg/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace mfhg {

namespace {

constexpr int kBins = 256;
constexpr double kLogBins = 5.545177444479562;  // ln(256)

Image as_gray(const Image& img) {
  if (img.channels() == 1) return img;
  return to_grayscale(img);
}

void check_dims(const Image& a, const Image& b, const char* who) {
  if (a.height() != b.height() || a.width() != b.width())
    throw std::invalid_argument(std::string(who) + ": dimensions mismatch");
}

int bin_of(double v) {
  const int b = static_cast<int>(v * kBins);
  return b < 0 ? 0 : (b >= kBins ? kBins - 1 : b);
}

struct JointHistogram {
  std::vector<double> joint;        // kBins * kBins
  std::array<double, kBins> px{};   // first marginal
  std::array<double, kBins> py{};   // second marginal

  JointHistogram(const Image& x, const Image& y)
      : joint(static_cast<std::size_t>(kBins) * kBins, 0.0) {
    const std::size_t n = x.data().size();
    const double inc = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int bx = bin_of(x.data()[i]);
      const int by = bin_of(y.data()[i]);
      joint[static_cast<std::size_t>(bx) * kBins + by] += inc;
      px[bx] += inc;
      py[by] += inc;
    }
  }
};

double plogp(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

template <typename Container>
double shannon_entropy(const Container& p) {
  double h = 0.0;
  for (double v : p) h -= plogp(v);
  return h;
}

double joint_entropy(const std::vector<double>& joint) {
  double h = 0.0;
  for (double v : joint) h -= plogp(v);
  return h;
}

double mutual_information(const JointHistogram& hist) {
  return shannon_entropy(hist.px) + shannon_entropy(hist.py) -
         joint_entropy(hist.joint);
}

// Summed-area table over one grayscale channel.
struct Sat {
  int h = 0, w = 0;
  std::vector<double> s;  // (h+1) x (w+1)

  Sat(const Image& img, const Image* other = nullptr) {
    h = img.height();
    w = img.width();
    s.assign(static_cast<std::size_t>(h + 1) * (w + 1), 0.0);
    for (int y = 0; y < h; ++y) {
      double row = 0.0;
      for (int x = 0; x < w; ++x) {
        const double v = other ? img.at(y, x, 0) * other->at(y, x, 0)
                               : img.at(y, x, 0);
        row += v;
        s[static_cast<std::size_t>(y + 1) * (w + 1) + (x + 1)] =
            s[static_cast<std::size_t>(y) * (w + 1) + (x + 1)] + row;
      }
    }
  }

  // Sum over [y0, y0+wh) x [x0, x0+ww).
  double window(int y0, int x0, int wh, int ww) const {
    const auto idx = [&](int y, int x) {
      return s[static_cast<std::size_t>(y) * (w + 1) + x];
    };
    return idx(y0 + wh, x0 + ww) - idx(y0, x0 + ww) - idx(y0 + wh, x0) +
           idx(y0, x0);
  }
};

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

double ssim_window(double sum_a, double sum_b, double sum_aa, double sum_bb,
                   double sum_ab, double n) {
  const double mu_a = sum_a / n;
  const double mu_b = sum_b / n;
  const double var_a = sum_aa / n - mu_a * mu_a;
  const double var_b = sum_bb / n - mu_b * mu_b;
  const double cov = sum_ab / n - mu_a * mu_b;
  return (2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2) /
         ((mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2));
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  check_dims(a, b, "ssim");
  const Image ga = as_gray(a);
  const Image gb = as_gray(b);
  const int h = ga.height(), w = ga.width();
  const int win_h = std::min(8, h), win_w = std::min(8, w);

  const Sat sa(ga), sb(gb), saa(ga, &ga), sbb(gb, &gb), sab(ga, &gb);
  const double n = static_cast<double>(win_h) * win_w;
  double total = 0.0;
  long count = 0;
  for (int y = 0; y + win_h <= h; ++y)
    for (int x = 0; x + win_w <= w; ++x) {
      total += ssim_window(sa.window(y, x, win_h, win_w),
                           sb.window(y, x, win_h, win_w),
                           saa.window(y, x, win_h, win_w),
                           sbb.window(y, x, win_h, win_w),
                           sab.window(y, x, win_h, win_w), n);
      ++count;
    }
  return total / static_cast<double>(count);
}

double q_mi(const Image& a, const Image& b, const Image& f) {
  check_dims(a, f, "q_mi");
  check_dims(b, f, "q_mi");
  const Image ga = as_gray(a), gb = as_gray(b), gf = as_gray(f);

  const JointHistogram af(ga, gf), bf(gb, gf);
  const double haf = shannon_entropy(af.px) + shannon_entropy(af.py);
  const double hbf = shannon_entropy(bf.px) + shannon_entropy(bf.py);
  const double term_a = haf > 0.0 ? mutual_information(af) / haf : 0.0;
  const double term_b = hbf > 0.0 ? mutual_information(bf) / hbf : 0.0;
  return 2.0 * (term_a + term_b);
}

namespace {

double tsallis_entropy(const std::array<double, kBins>& p, double q) {
  double sum = 0.0;
  for (double v : p)
    if (v > 0.0) sum += std::pow(v, q);
  return (1.0 - sum) / (q - 1.0);
}

// Tsallis divergence of the joint from the product of the marginals.
double tsallis_mutual_information(const JointHistogram& hist, double q) {
  double sum = 0.0;
  for (int i = 0; i < kBins; ++i) {
    if (hist.px[i] <= 0.0) continue;
    for (int j = 0; j < kBins; ++j) {
      const double pij = hist.joint[static_cast<std::size_t>(i) * kBins + j];
      if (pij <= 0.0) continue;
      sum += std::pow(pij, q) * std::pow(hist.px[i] * hist.py[j], 1.0 - q);
    }
  }
  return (sum - 1.0) / (q - 1.0);
}

}  // namespace

double q_te(const Image& a, const Image& b, const Image& f, double q) {
  check_dims(a, f, "q_te");
  check_dims(b, f, "q_te");
  if (std::abs(q - 1.0) < 1e-12)
    throw std::invalid_argument("q_te: q must differ from 1");
  const Image ga = as_gray(a), gb = as_gray(b), gf = as_gray(f);

  const JointHistogram af(ga, gf), bf(gb, gf);
  const double denom = tsallis_entropy(af.px, q) + tsallis_entropy(bf.px, q);
  if (denom <= 0.0) return 0.0;
  return (tsallis_mutual_information(af, q) +
          tsallis_mutual_information(bf, q)) /
         denom;
}

namespace {

// Eigenvalues of a symmetric 3x3 matrix (trigonometric method), sorted
// descending.
std::array<double, 3> symmetric_eigenvalues(const std::array<double, 6>& m) {
  // m = [a00, a11, a22, a01, a02, a12]
  const double a00 = m[0], a11 = m[1], a22 = m[2];
  const double a01 = m[3], a02 = m[4], a12 = m[5];
  const double p1 = a01 * a01 + a02 * a02 + a12 * a12;
  std::array<double, 3> eig;
  if (p1 < 1e-30) {
    eig = {a00, a11, a22};
    std::sort(eig.begin(), eig.end(), std::greater<>());
    return eig;
  }
  const double q = (a00 + a11 + a22) / 3.0;
  const double p2 = (a00 - q) * (a00 - q) + (a11 - q) * (a11 - q) +
                    (a22 - q) * (a22 - q) + 2.0 * p1;
  const double p = std::sqrt(p2 / 6.0);
  // B = (A - qI) / p
  const double b00 = (a00 - q) / p, b11 = (a11 - q) / p, b22 = (a22 - q) / p;
  const double b01 = a01 / p, b02 = a02 / p, b12 = a12 / p;
  const double detb = b00 * (b11 * b22 - b12 * b12) -
                      b01 * (b01 * b22 - b12 * b02) +
                      b02 * (b01 * b12 - b11 * b02);
  double r = detb / 2.0;
  r = std::clamp(r, -1.0, 1.0);
  const double phi = std::acos(r) / 3.0;
  eig[0] = q + 2.0 * p * std::cos(phi);
  eig[2] = q + 2.0 * p * std::cos(phi + 2.0 * M_PI / 3.0);
  eig[1] = 3.0 * q - eig[0] - eig[2];
  std::sort(eig.begin(), eig.end(), std::greater<>());
  return eig;
}

// Nonlinear correlation coefficient: base-256 mutual information, 1 at
// identical maximal-entropy inputs, 0 under independence.
double ncc(const Image& x, const Image& y) {
  const JointHistogram hist(x, y);
  return mutual_information(hist) / kLogBins;
}

}  // namespace

double q_ncie(const Image& a, const Image& b, const Image& f) {
  check_dims(a, f, "q_ncie");
  check_dims(b, f, "q_ncie");
  const Image ga = as_gray(a), gb = as_gray(b), gf = as_gray(f);

  const std::array<double, 6> r{1.0,         1.0,         1.0,
                                ncc(ga, gb), ncc(ga, gf), ncc(gb, gf)};
  const std::array<double, 3> eig = symmetric_eigenvalues(r);
  double value = 1.0;
  for (double lambda : eig) {
    const double t = lambda / 3.0;
    if (t > 0.0) value += t * std::log(t) / kLogBins;
  }
  return value;
}

namespace {

struct GradientField {
  std::vector<double> strength;
  std::vector<double> angle;  // folded into (-pi/2, pi/2]
};

GradientField sobel(const Image& g) {
  const int h = g.height(), w = g.width();
  GradientField out;
  out.strength.resize(static_cast<std::size_t>(h) * w);
  out.angle.resize(out.strength.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto px = [&](int yy, int xx) {
        return g.at(reflect_index(yy, h), reflect_index(xx, w), 0);
      };
      const double sx = px(y - 1, x + 1) + 2.0 * px(y, x + 1) +
                        px(y + 1, x + 1) - px(y - 1, x - 1) -
                        2.0 * px(y, x - 1) - px(y + 1, x - 1);
      const double sy = px(y + 1, x - 1) + 2.0 * px(y + 1, x) +
                        px(y + 1, x + 1) - px(y - 1, x - 1) -
                        2.0 * px(y - 1, x) - px(y - 1, x + 1);
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      out.strength[i] = std::hypot(sx, sy);
      double ang = std::atan2(sy, sx);
      if (ang > M_PI / 2.0) ang -= M_PI;
      if (ang <= -M_PI / 2.0) ang += M_PI;
      out.angle[i] = ang;
    }
  }
  return out;
}

constexpr double kGammaG = 0.9994, kKappaG = -15.0, kSigmaG = 0.5;
constexpr double kGammaA = 0.9879, kKappaA = -22.0, kSigmaA = 0.8;

double edge_preservation(double g_src, double a_src, double g_f, double a_f) {
  const double g_max = std::max(g_src, g_f);
  const double strength_ratio = g_max > 0.0 ? std::min(g_src, g_f) / g_max : 0.0;
  const double angle_score =
      std::abs(std::abs(a_src - a_f) - M_PI / 2.0) / (M_PI / 2.0);
  const double qg = kGammaG / (1.0 + std::exp(kKappaG * (strength_ratio - kSigmaG)));
  const double qa = kGammaA / (1.0 + std::exp(kKappaA * (angle_score - kSigmaA)));
  return qg * qa;
}

}  // namespace

double q_g(const Image& a, const Image& b, const Image& f) {
  check_dims(a, f, "q_g");
  check_dims(b, f, "q_g");
  const GradientField fa = sobel(as_gray(a));
  const GradientField fb = sobel(as_gray(b));
  const GradientField ff = sobel(as_gray(f));

  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < fa.strength.size(); ++i) {
    const double waf =
        edge_preservation(fa.strength[i], fa.angle[i], ff.strength[i],
                          ff.angle[i]);
    const double wbf =
        edge_preservation(fb.strength[i], fb.angle[i], ff.strength[i],
                          ff.angle[i]);
    num += waf * fa.strength[i] + wbf * fb.strength[i];
    den += fa.strength[i] + fb.strength[i];
  }
  return den > 0.0 ? num / den : 0.0;
}

double q_s(const Image& a, const Image& b, const Image& f) {
  check_dims(a, f, "q_s");
  check_dims(b, f, "q_s");
  const Image ga = as_gray(a), gb = as_gray(b), gf = as_gray(f);
  const int h = ga.height(), w = ga.width();
  const int win_h = std::min(8, h), win_w = std::min(8, w);
  const double n = static_cast<double>(win_h) * win_w;

  const Sat sa(ga), sb(gb), sf(gf);
  const Sat saa(ga, &ga), sbb(gb, &gb), sff(gf, &gf);
  const Sat saf(ga, &gf), sbf(gb, &gf);

  double total = 0.0;
  long count = 0;
  for (int y = 0; y + win_h <= h; ++y) {
    for (int x = 0; x + win_w <= w; ++x) {
      const double sum_a = sa.window(y, x, win_h, win_w);
      const double sum_b = sb.window(y, x, win_h, win_w);
      const double sum_f = sf.window(y, x, win_h, win_w);
      const double sum_aa = saa.window(y, x, win_h, win_w);
      const double sum_bb = sbb.window(y, x, win_h, win_w);
      const double sum_ff = sff.window(y, x, win_h, win_w);
      const double var_a =
          std::max(0.0, sum_aa / n - (sum_a / n) * (sum_a / n));
      const double var_b =
          std::max(0.0, sum_bb / n - (sum_b / n) * (sum_b / n));
      const double lambda =
          var_a + var_b > 0.0 ? var_a / (var_a + var_b) : 0.5;
      const double ssim_af =
          ssim_window(sum_a, sum_f, sum_aa, sum_ff,
                      saf.window(y, x, win_h, win_w), n);
      const double ssim_bf =
          ssim_window(sum_b, sum_f, sum_bb, sum_ff,
                      sbf.window(y, x, win_h, win_w), n);
      total += lambda * ssim_af + (1.0 - lambda) * ssim_bf;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

MetricReport evaluate_fusion(const Image& a, const Image& b, const Image& f,
                             const Image* reference) {
  MetricReport r;
  if (reference) r.ssim = ssim(f, *reference);
  r.q_mi = q_mi(a, b, f);
  r.q_te = q_te(a, b, f);
  r.q_ncie = q_ncie(a, b, f);
  r.q_g = q_g(a, b, f);
  r.q_s = q_s(a, b, f);
  return r;
}

BiasStudy bias_study(const std::vector<SourcePair>& pairs,
                     const std::vector<Fuser>& fusers,
                     const std::vector<Image>* references) {
  if (pairs.empty() || fusers.empty())
    throw std::invalid_argument("bias_study: pairs and fusers required");
  if (references && references->size() != pairs.size())
    throw std::invalid_argument("bias_study: one reference per pair required");

  BiasStudy study;
  study.pairs = static_cast<int>(pairs.size());
  for (int p = 0; p < study.pairs; ++p) {
    double avg[5] = {0, 0, 0, 0, 0};
    double dummy[5] = {0, 0, 0, 0, 0};
    bool has_avg = false, has_dummy = false;
    for (const Fuser& fuser : fusers) {
      const Image fused = fuse_pair(fuser, pairs[p]);
      const Image* ref = references ? &(*references)[p] : nullptr;
      MetricReport m = evaluate_fusion(pairs[p].a, pairs[p].b, fused, ref);
      study.rows.push_back({p, fuser.name(), m});
      const double scores[5] = {m.q_mi, m.q_te, m.q_ncie, m.q_g, m.q_s};
      if (fuser.kind == FuserKind::Average) {
        std::copy(scores, scores + 5, avg);
        has_avg = true;
      } else if (fuser.kind == FuserKind::DummyA ||
                 fuser.kind == FuserKind::DummyB) {
        for (int i = 0; i < 5; ++i)
          dummy[i] = has_dummy ? std::max(dummy[i], scores[i]) : scores[i];
        has_dummy = true;
      }
    }
    if (has_avg && has_dummy) {
      if (dummy[0] > avg[0]) ++study.dummy_wins_q_mi;
      if (dummy[1] > avg[1]) ++study.dummy_wins_q_te;
      if (dummy[2] > avg[2]) ++study.dummy_wins_q_ncie;
      if (dummy[3] > avg[3]) ++study.dummy_wins_q_g;
      if (dummy[4] > avg[4]) ++study.dummy_wins_q_s;
    }
  }
  const int half = study.pairs / 2;
  if (study.dummy_wins_q_mi > half) study.biased_metrics.push_back("q_mi");
  if (study.dummy_wins_q_te > half) study.biased_metrics.push_back("q_te");
  if (study.dummy_wins_q_ncie > half) study.biased_metrics.push_back("q_ncie");
  if (study.dummy_wins_q_g > half) study.biased_metrics.push_back("q_g");
  if (study.dummy_wins_q_s > half) study.biased_metrics.push_back("q_s");
  return study;
}

void write_metric_csv(std::ostream& out, const std::vector<BiasRow>& rows) {
  out << "pair_id,fuser,ssim,q_mi,q_te,q_ncie,q_g,q_s\n";
  for (const BiasRow& row : rows) {
    out << row.pair_id << ',' << row.fuser << ',';
    if (row.metrics.ssim) out << *row.metrics.ssim;
    out << ',' << row.metrics.q_mi << ',' << row.metrics.q_te << ','
        << row.metrics.q_ncie << ',' << row.metrics.q_g << ','
        << row.metrics.q_s << '\n';
  }
}

}  // namespace mfhg
