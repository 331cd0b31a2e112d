// AVX2 + FMA variants.  Four paths per register, one per 64-bit lane.  Every
// arithmetic step below has a scalar twin in batch_scalar.cpp / rng.hpp; keep
// them in lockstep or the equivalence tests will say so.

#include <immintrin.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

#include "qdetect/rng.hpp"
#include "qdetect/simd/batch.hpp"

namespace qdetect::simd::detail {

namespace {

constexpr int kLanes = 4;

struct alignas(32) Lanes64 {
  std::uint64_t v[kLanes];
};

// Philox words sit in the low half of each 64-bit lane so that mul_epu32
// yields the full 32x32 -> 64 product.
struct PhiloxKeys {
  __m256i k0[10];
  __m256i k1[10];
};

PhiloxKeys schedule(rng::Key key) {
  PhiloxKeys s;
  for (int r = 0; r < 10; ++r) {
    s.k0[r] = _mm256_set1_epi64x(key[0]);
    s.k1[r] = _mm256_set1_epi64x(key[1]);
    key[0] += rng::kPhiloxW0;
    key[1] += rng::kPhiloxW1;
  }
  return s;
}

inline void philox(__m256i& c0, __m256i& c1, __m256i& c2, __m256i& c3, const PhiloxKeys& ks) {
  const __m256i m0 = _mm256_set1_epi64x(rng::kPhiloxM0);
  const __m256i m1 = _mm256_set1_epi64x(rng::kPhiloxM1);
  const __m256i lo = _mm256_set1_epi64x(0xffffffffLL);
  for (int r = 0; r < 10; ++r) {
    const __m256i p0 = _mm256_mul_epu32(c0, m0);
    const __m256i p1 = _mm256_mul_epu32(c2, m1);
    const __m256i n0 = _mm256_xor_si256(_mm256_xor_si256(_mm256_srli_epi64(p1, 32), c1), ks.k0[r]);
    const __m256i n2 = _mm256_xor_si256(_mm256_xor_si256(_mm256_srli_epi64(p0, 32), c3), ks.k1[r]);
    c1 = _mm256_and_si256(p1, lo);
    c3 = _mm256_and_si256(p0, lo);
    c0 = n0;
    c2 = n2;
  }
}

// Exact u32 -> double via the 2^52 exponent trick.
inline __m256d u32_to_double(__m256i w) {
  const __m256i magic = _mm256_set1_epi64x(0x4330000000000000LL);
  return _mm256_sub_pd(_mm256_castsi256_pd(_mm256_or_si256(w, magic)), _mm256_set1_pd(0x1.0p52));
}

inline __m256d to_unit(__m256i w) {
  return _mm256_mul_pd(_mm256_add_pd(u32_to_double(w), _mm256_set1_pd(0.5)), _mm256_set1_pd(0x1.0p-32));
}

inline __m256d log_pd(__m256d x) {
  using namespace rng::detail;
  __m256i bits = _mm256_castpd_si256(x);
  bits = _mm256_add_epi64(bits, _mm256_set1_epi64x(0x3ff0000000000000LL - 0x3fe6a09e00000000LL));
  const __m256i kb = _mm256_srli_epi64(bits, 52);
  const __m256d dk = _mm256_sub_pd(u32_to_double(kb), _mm256_set1_pd(1023.0));
  bits = _mm256_add_epi64(_mm256_and_si256(bits, _mm256_set1_epi64x(0x000fffffffffffffLL)),
                          _mm256_set1_epi64x(0x3fe6a09e00000000LL));
  const __m256d m = _mm256_castsi256_pd(bits);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d f = _mm256_sub_pd(m, one);
  const __m256d hfsq = _mm256_mul_pd(_mm256_mul_pd(_mm256_set1_pd(0.5), f), f);
  const __m256d s = _mm256_div_pd(f, _mm256_add_pd(_mm256_set1_pd(2.0), f));
  const __m256d z = _mm256_mul_pd(s, s);
  const __m256d w = _mm256_mul_pd(z, z);
  const __m256d t1 = _mm256_mul_pd(
      w, _mm256_fmadd_pd(w, _mm256_fmadd_pd(w, _mm256_set1_pd(kLg6), _mm256_set1_pd(kLg4)), _mm256_set1_pd(kLg2)));
  const __m256d t2 = _mm256_mul_pd(
      z, _mm256_fmadd_pd(
             w,
             _mm256_fmadd_pd(w, _mm256_fmadd_pd(w, _mm256_set1_pd(kLg7), _mm256_set1_pd(kLg5)),
                             _mm256_set1_pd(kLg3)),
             _mm256_set1_pd(kLg1)));
  const __m256d r = _mm256_add_pd(t2, t1);
  __m256d acc = _mm256_mul_pd(s, _mm256_add_pd(hfsq, r));
  acc = _mm256_add_pd(acc, _mm256_mul_pd(dk, _mm256_set1_pd(kLn2Lo)));
  acc = _mm256_sub_pd(acc, hfsq);
  acc = _mm256_add_pd(acc, f);
  return _mm256_add_pd(acc, _mm256_mul_pd(dk, _mm256_set1_pd(kLn2Hi)));
}

inline void sincos_2pi_pd(__m256d u, __m256d& sn, __m256d& cs) {
  using namespace rng::detail;
  const __m256d q = _mm256_round_pd(_mm256_mul_pd(_mm256_set1_pd(4.0), u), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  const __m256d r = _mm256_sub_pd(u, _mm256_mul_pd(_mm256_set1_pd(0.25), q));
  const __m256d x = _mm256_mul_pd(_mm256_set1_pd(kTwoPi), r);
  const __m256d x2 = _mm256_mul_pd(x, x);
  __m256d ps = _mm256_fmadd_pd(x2, _mm256_set1_pd(kS15), _mm256_set1_pd(kS13));
  ps = _mm256_fmadd_pd(x2, ps, _mm256_set1_pd(kS11));
  ps = _mm256_fmadd_pd(x2, ps, _mm256_set1_pd(kS9));
  ps = _mm256_fmadd_pd(x2, ps, _mm256_set1_pd(kS7));
  ps = _mm256_fmadd_pd(x2, ps, _mm256_set1_pd(kS5));
  ps = _mm256_fmadd_pd(x2, ps, _mm256_set1_pd(kS3));
  const __m256d s = _mm256_fmadd_pd(_mm256_mul_pd(x, x2), ps, x);
  __m256d pc = _mm256_fmadd_pd(x2, _mm256_set1_pd(kC16), _mm256_set1_pd(kC14));
  pc = _mm256_fmadd_pd(x2, pc, _mm256_set1_pd(kC12));
  pc = _mm256_fmadd_pd(x2, pc, _mm256_set1_pd(kC10));
  pc = _mm256_fmadd_pd(x2, pc, _mm256_set1_pd(kC8));
  pc = _mm256_fmadd_pd(x2, pc, _mm256_set1_pd(kC6));
  pc = _mm256_fmadd_pd(x2, pc, _mm256_set1_pd(kC4));
  pc = _mm256_fmadd_pd(x2, pc, _mm256_set1_pd(kC2));
  const __m256d c = _mm256_fmadd_pd(x2, pc, _mm256_set1_pd(1.0));

  // quadrant q & 3: (s, c), (c, -s), (-s, -c), (-c, s)
  const __m256i qi = _mm256_cvtepi32_epi64(_mm256_cvtpd_epi32(q));
  const __m256i one = _mm256_set1_epi64x(1);
  const __m256i two = _mm256_set1_epi64x(2);
  const __m256d swap = _mm256_castsi256_pd(_mm256_cmpeq_epi64(_mm256_and_si256(qi, one), one));
  const __m256d neg_sin = _mm256_castsi256_pd(_mm256_cmpeq_epi64(_mm256_and_si256(qi, two), two));
  const __m256d neg_cos =
      _mm256_castsi256_pd(_mm256_cmpeq_epi64(_mm256_and_si256(_mm256_add_epi64(qi, one), two), two));
  const __m256d sign = _mm256_set1_pd(-0.0);
  const __m256d a = _mm256_blendv_pd(s, c, swap);
  const __m256d b = _mm256_blendv_pd(c, s, swap);
  sn = _mm256_xor_pd(a, _mm256_and_pd(neg_sin, sign));
  cs = _mm256_xor_pd(b, _mm256_and_pd(neg_cos, sign));
}

inline void box_muller_pd(__m256i w0, __m256i w1, __m256d& za, __m256d& zb) {
  const __m256d radius = _mm256_sqrt_pd(_mm256_mul_pd(_mm256_set1_pd(-2.0), log_pd(to_unit(w0))));
  __m256d sn, cs;
  sincos_2pi_pd(to_unit(w1), sn, cs);
  za = _mm256_mul_pd(radius, cs);
  zb = _mm256_mul_pd(radius, sn);
}

inline __m256i load_u64(const Lanes64& l) { return _mm256_load_si256(reinterpret_cast<const __m256i*>(l.v)); }

inline __m256i group_word(std::uint32_t group, rng::Stream stream) {
  return _mm256_set1_epi64x((static_cast<std::uint32_t>(stream) << 24) | (group & 0x00FFFFFFu));
}

// Bit l set when lane l is finite.
inline int finite_mask(__m256d v) {
  const __m256d abs = _mm256_andnot_pd(_mm256_set1_pd(-0.0), v);
  return _mm256_movemask_pd(_mm256_cmp_pd(abs, _mm256_set1_pd(INFINITY), _CMP_LT_OQ));
}

}  // namespace

void detect_avx2(const DetectionBatch& b, std::uint32_t first_path, std::size_t count, DetectionOutcome* out) {
  const std::size_t n = b.n_sensors;
  const std::size_t groups = (n + 3) / 4;
  const PhiloxKeys keys = schedule(rng::key_from_seed(b.seed));
  const __m256d vdt = _mm256_set1_pd(b.dt);
  const __m256d vsqdt = _mm256_set1_pd(std::sqrt(b.dt));
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d vneg_r = _mm256_set1_pd(-b.param);

  // state, sensor-major with four lanes each
  std::vector<__m256d> z(n), u(n), m(n), xi(groups * 4), alpha(n);
  std::vector<__m256d> vconst(n), vc(n), vh(n);
  std::vector<__m256i> vchange(n);
  for (std::size_t i = 0; i < n; ++i) {
    vconst[i] = _mm256_set1_pd(b.param / b.c[i]);
    vc[i] = _mm256_set1_pd(b.c[i]);
    vh[i] = _mm256_set1_pd(b.h[i]);
    vchange[i] = _mm256_set1_epi64x(static_cast<long long>(b.change_idx[i]));
  }
  std::vector<__m256i> gword(groups);
  for (std::size_t g = 0; g < groups; ++g) gword[g] = group_word(static_cast<std::uint32_t>(g), rng::Stream::observation_noise);

  Lanes64 step{}, path{};
  alignas(32) double energy[kLanes] = {}, origin_energy[kLanes] = {};
  alignas(32) double ybuf[kLanes];
  std::vector<double> yl(n);
  long long slot[kLanes];  // output index per lane, -1 when idle
  std::size_t next = 0;

  const auto refill = [&](int l) {
    if (next < count) {
      slot[l] = static_cast<long long>(next);
      path.v[l] = first_path + static_cast<std::uint32_t>(next);
      ++next;
    } else {
      slot[l] = -1;
      path.v[l] = 0;
    }
    step.v[l] = 0;
    energy[l] = 0.0;
    origin_energy[l] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      reinterpret_cast<double*>(&z[i])[l] = 0.0;
      reinterpret_cast<double*>(&u[i])[l] = 0.0;
      reinterpret_cast<double*>(&m[i])[l] = 0.0;
    }
  };
  for (int l = 0; l < kLanes; ++l) refill(l);

  const __m256i lo32 = _mm256_set1_epi64x(0xffffffffLL);
  while (slot[0] >= 0 || slot[1] >= 0 || slot[2] >= 0 || slot[3] >= 0) {
    __m256i k = _mm256_add_epi64(load_u64(step), _mm256_set1_epi64x(1));
    _mm256_store_si256(reinterpret_cast<__m256i*>(step.v), k);

    if (b.linear) {
      __m256d sum = _mm256_setzero_pd();
      for (std::size_t j = 0; j < n; ++j) sum = _mm256_add_pd(sum, z[j]);
      const __m256d base = _mm256_mul_pd(vneg_r, sum);
      for (std::size_t i = 0; i < n; ++i) {
        alpha[i] = _mm256_div_pd(base, vc[i]);
        const int ok = finite_mask(alpha[i]);
        if (ok != 0xF) {
          for (int l = 0; l < kLanes; ++l) {
            if ((ok >> l) & 1) continue;
            if (slot[l] >= 0) throw_blowup(step.v[l], i);
            reinterpret_cast<double*>(&alpha[i])[l] = 0.0;  // idle lane
          }
        }
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) alpha[i] = vconst[i];
    }

    const __m256i kc0 = _mm256_and_si256(k, lo32);
    const __m256i kc1 = _mm256_srli_epi64(k, 32);
    const __m256i pc = load_u64(path);
    for (std::size_t g = 0; g < groups; ++g) {
      __m256i c0 = kc0, c1 = kc1, c2 = pc, c3 = gword[g];
      philox(c0, c1, c2, c3, keys);
      box_muller_pd(c0, c1, xi[4 * g], xi[4 * g + 1]);
      if (4 * g + 2 < n) box_muller_pd(c2, c3, xi[4 * g + 2], xi[4 * g + 3]);  // skip unused deviates
    }

    __m256d crossed = _mm256_setzero_pd();
    for (std::size_t i = 0; i < n; ++i) {
      const __m256d a = alpha[i];
      const __m256d active = _mm256_castsi256_pd(_mm256_cmpgt_epi64(k, vchange[i]));
      const __m256d drift_term = _mm256_and_pd(active, _mm256_mul_pd(a, vdt));
      const __m256d dz = _mm256_add_pd(drift_term, _mm256_mul_pd(vsqdt, xi[i]));
      const __m256d znew = _mm256_add_pd(z[i], dz);
      const __m256d dzobs = _mm256_sub_pd(znew, z[i]);
      z[i] = znew;
      const __m256d inc =
          _mm256_sub_pd(_mm256_mul_pd(a, dzobs), _mm256_mul_pd(_mm256_mul_pd(_mm256_mul_pd(half, a), a), vdt));
      u[i] = _mm256_add_pd(u[i], inc);
      if (const int ok = finite_mask(u[i]); ok != 0xF) {
        for (int l = 0; l < kLanes; ++l) {
          if (!((ok >> l) & 1) && slot[l] >= 0) throw_overflow(step.v[l], i);
        }
      }
      m[i] = _mm256_min_pd(u[i], m[i]);
      const __m256d y = _mm256_sub_pd(u[i], m[i]);
      crossed = _mm256_or_pd(crossed, _mm256_cmp_pd(y, vh[i], _CMP_GE_OQ));
    }
    const __m256d a1 = alpha[0];
    const __m256d e = _mm256_add_pd(_mm256_load_pd(energy), _mm256_mul_pd(_mm256_mul_pd(_mm256_mul_pd(half, a1), a1), vdt));
    _mm256_store_pd(energy, e);

    const int cross_mask = _mm256_movemask_pd(crossed);
    for (int l = 0; l < kLanes; ++l) {
      if (slot[l] < 0) continue;
      const std::uint64_t kl = step.v[l];
      if (kl == b.origin_index) origin_energy[l] = energy[l];
      const bool hit = (cross_mask >> l) & 1;
      if (!hit && kl < b.max_steps) continue;
      DetectionOutcome res;
      res.steps = kl;
      res.energy = energy[l];
      res.delay_energy = kl > b.origin_index ? energy[l] - origin_energy[l] : 0.0;
      if (hit) {
        res.stopped = true;
        for (std::size_t i = 0; i < n; ++i) {
          _mm256_store_pd(ybuf, _mm256_sub_pd(u[i], m[i]));
          yl[i] = ybuf[l];
        }
        res.firing = firing_sensor(yl.data(), b.h.data(), n, 1);
      }
      out[slot[l]] = res;
      refill(l);
    }
  }
}

void reflected_avx2(const ReflectedBatch& b, std::uint32_t first_path, std::size_t count, ReflectedOutcome* out) {
  if (!b.exact_bridge) {
    reflected_scalar(b, first_path, count, out);
    return;
  }
  const std::size_t n = b.n_sensors;
  const PhiloxKeys keys = schedule(rng::key_from_seed(b.seed));
  const double sqdt = std::sqrt(b.dt);
  std::vector<__m256d> vmdt(n), vsd(n), vtwo_var(n), vinv_var(n), vh(n), x(n);
  std::vector<__m256i> gword(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double sd = b.sigma[i] * sqdt;
    vmdt[i] = _mm256_set1_pd(b.drift[i] * b.dt);
    vsd[i] = _mm256_set1_pd(sd);
    vtwo_var[i] = _mm256_set1_pd(2.0 * sd * sd);
    vinv_var[i] = _mm256_set1_pd(2.0 / (sd * sd));
    vh[i] = _mm256_set1_pd(b.h[i]);
    gword[i] = group_word(static_cast<std::uint32_t>(i << 14), rng::Stream::reflected_walk);
  }
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d cutoff = _mm256_set1_pd(kCrossingCutoff);
  const __m256i lo32 = _mm256_set1_epi64x(0xffffffffLL);

  Lanes64 step{}, path{};
  long long slot[kLanes];
  std::size_t next = 0;
  alignas(32) double xa[kLanes], xb[kLanes];
  const auto refill = [&](int l) {
    if (next < count) {
      slot[l] = static_cast<long long>(next);
      path.v[l] = first_path + static_cast<std::uint32_t>(next);
      ++next;
    } else {
      slot[l] = -1;
      path.v[l] = 0;
    }
    step.v[l] = 0;
    for (std::size_t i = 0; i < n; ++i) reinterpret_cast<double*>(&x[i])[l] = 0.0;
  };
  for (int l = 0; l < kLanes; ++l) refill(l);

  while (slot[0] >= 0 || slot[1] >= 0 || slot[2] >= 0 || slot[3] >= 0) {
    const __m256i k = _mm256_add_epi64(load_u64(step), _mm256_set1_epi64x(1));
    _mm256_store_si256(reinterpret_cast<__m256i*>(step.v), k);
    const __m256i kc0 = _mm256_and_si256(k, lo32);
    const __m256i kc1 = _mm256_srli_epi64(k, 32);
    const __m256i pc = load_u64(path);

    bool stopped[kLanes] = {false, false, false, false};
    double first[kLanes] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      __m256i c0 = kc0, c1 = kc1, c2 = pc, c3 = gword[i];
      philox(c0, c1, c2, c3, keys);
      __m256d xi, unused;
      box_muller_pd(c0, c1, xi, unused);
      const __m256d delta = _mm256_add_pd(vmdt[i], _mm256_mul_pd(vsd[i], xi));
      const __m256d lg = log_pd(to_unit(c2));
      const __m256d low = _mm256_mul_pd(
          half, _mm256_sub_pd(delta, _mm256_sqrt_pd(_mm256_sub_pd(_mm256_mul_pd(delta, delta),
                                                                  _mm256_mul_pd(vtwo_var[i], lg)))));
      const __m256d a = x[i];
      const __m256d xn = _mm256_max_pd(_mm256_add_pd(a, delta), _mm256_sub_pd(delta, low));
      const __m256d expo =
          _mm256_mul_pd(_mm256_mul_pd(_mm256_sub_pd(vh[i], a), _mm256_sub_pd(vh[i], xn)), vinv_var[i]);
      const int cand = _mm256_movemask_pd(
          _mm256_or_pd(_mm256_cmp_pd(xn, vh[i], _CMP_GE_OQ), _mm256_cmp_pd(expo, cutoff, _CMP_LT_OQ)));
      x[i] = xn;
      if (cand) {
        _mm256_store_pd(xa, a);
        _mm256_store_pd(xb, xn);
        for (int l = 0; l < kLanes; ++l) {
          if (!((cand >> l) & 1) || slot[l] < 0) continue;
          double t;
          if (refine_crossing(b, i, static_cast<std::uint32_t>(path.v[l]), step.v[l], xa[l], xb[l], &t) &&
              (!stopped[l] || t < first[l])) {
            first[l] = t;
            stopped[l] = true;
          }
        }
      }
    }
    for (int l = 0; l < kLanes; ++l) {
      if (slot[l] < 0) continue;
      if (!stopped[l] && step.v[l] < b.max_steps) continue;
      ReflectedOutcome res;
      res.stopped = stopped[l];
      res.time = stopped[l] ? first[l] : b.dt * static_cast<double>(b.max_steps);
      out[slot[l]] = res;
      refill(l);
    }
  }
}

}  // namespace qdetect::simd::detail
