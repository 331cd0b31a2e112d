// AVX-512 detection kernel: eight paths per register.  Same operation
// sequence as the scalar reference and the AVX2 kernel, lane for lane.  The
// reflected walk stays on AVX2; it is not on any hot path that matters.

#include <immintrin.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "qdetect/rng.hpp"
#include "qdetect/simd/batch.hpp"

namespace qdetect::simd::detail {

namespace {

constexpr int kLanes = 8;

struct PhiloxKeys {
  __m512i k0[10];
  __m512i k1[10];
};

PhiloxKeys schedule(rng::Key key) {
  PhiloxKeys s;
  for (int r = 0; r < 10; ++r) {
    s.k0[r] = _mm512_set1_epi64(key[0]);
    s.k1[r] = _mm512_set1_epi64(key[1]);
    key[0] += rng::kPhiloxW0;
    key[1] += rng::kPhiloxW1;
  }
  return s;
}

inline void philox(__m512i& c0, __m512i& c1, __m512i& c2, __m512i& c3, const PhiloxKeys& ks) {
  const __m512i m0 = _mm512_set1_epi64(rng::kPhiloxM0);
  const __m512i m1 = _mm512_set1_epi64(rng::kPhiloxM1);
  const __m512i lo = _mm512_set1_epi64(0xffffffffLL);
  for (int r = 0; r < 10; ++r) {
    const __m512i p0 = _mm512_mul_epu32(c0, m0);
    const __m512i p1 = _mm512_mul_epu32(c2, m1);
    const __m512i n0 = _mm512_ternarylogic_epi64(_mm512_srli_epi64(p1, 32), c1, ks.k0[r], 0x96);
    const __m512i n2 = _mm512_ternarylogic_epi64(_mm512_srli_epi64(p0, 32), c3, ks.k1[r], 0x96);
    c1 = _mm512_and_si512(p1, lo);
    c3 = _mm512_and_si512(p0, lo);
    c0 = n0;
    c2 = n2;
  }
}

inline __m512d u32_to_double(__m512i w) {
  const __m512i magic = _mm512_set1_epi64(0x4330000000000000LL);
  return _mm512_sub_pd(_mm512_castsi512_pd(_mm512_or_si512(w, magic)), _mm512_set1_pd(0x1.0p52));
}

inline __m512d to_unit(__m512i w) {
  return _mm512_mul_pd(_mm512_add_pd(u32_to_double(w), _mm512_set1_pd(0.5)), _mm512_set1_pd(0x1.0p-32));
}

inline __m512d log_pd(__m512d x) {
  using namespace rng::detail;
  __m512i bits = _mm512_castpd_si512(x);
  bits = _mm512_add_epi64(bits, _mm512_set1_epi64(0x3ff0000000000000LL - 0x3fe6a09e00000000LL));
  const __m512i kb = _mm512_srli_epi64(bits, 52);
  const __m512d dk = _mm512_sub_pd(u32_to_double(kb), _mm512_set1_pd(1023.0));
  bits = _mm512_add_epi64(_mm512_and_si512(bits, _mm512_set1_epi64(0x000fffffffffffffLL)),
                          _mm512_set1_epi64(0x3fe6a09e00000000LL));
  const __m512d m = _mm512_castsi512_pd(bits);
  const __m512d f = _mm512_sub_pd(m, _mm512_set1_pd(1.0));
  const __m512d hfsq = _mm512_mul_pd(_mm512_mul_pd(_mm512_set1_pd(0.5), f), f);
  const __m512d s = _mm512_div_pd(f, _mm512_add_pd(_mm512_set1_pd(2.0), f));
  const __m512d z = _mm512_mul_pd(s, s);
  const __m512d w = _mm512_mul_pd(z, z);
  const __m512d t1 = _mm512_mul_pd(
      w, _mm512_fmadd_pd(w, _mm512_fmadd_pd(w, _mm512_set1_pd(kLg6), _mm512_set1_pd(kLg4)), _mm512_set1_pd(kLg2)));
  const __m512d t2 = _mm512_mul_pd(
      z, _mm512_fmadd_pd(
             w,
             _mm512_fmadd_pd(w, _mm512_fmadd_pd(w, _mm512_set1_pd(kLg7), _mm512_set1_pd(kLg5)),
                             _mm512_set1_pd(kLg3)),
             _mm512_set1_pd(kLg1)));
  const __m512d r = _mm512_add_pd(t2, t1);
  __m512d acc = _mm512_mul_pd(s, _mm512_add_pd(hfsq, r));
  acc = _mm512_add_pd(acc, _mm512_mul_pd(dk, _mm512_set1_pd(kLn2Lo)));
  acc = _mm512_sub_pd(acc, hfsq);
  acc = _mm512_add_pd(acc, f);
  return _mm512_add_pd(acc, _mm512_mul_pd(dk, _mm512_set1_pd(kLn2Hi)));
}

inline void sincos_2pi_pd(__m512d u, __m512d& sn, __m512d& cs) {
  using namespace rng::detail;
  const __m512d q = _mm512_roundscale_pd(_mm512_mul_pd(_mm512_set1_pd(4.0), u),
                                         _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  const __m512d r = _mm512_sub_pd(u, _mm512_mul_pd(_mm512_set1_pd(0.25), q));
  const __m512d x = _mm512_mul_pd(_mm512_set1_pd(kTwoPi), r);
  const __m512d x2 = _mm512_mul_pd(x, x);
  __m512d ps = _mm512_fmadd_pd(x2, _mm512_set1_pd(kS15), _mm512_set1_pd(kS13));
  ps = _mm512_fmadd_pd(x2, ps, _mm512_set1_pd(kS11));
  ps = _mm512_fmadd_pd(x2, ps, _mm512_set1_pd(kS9));
  ps = _mm512_fmadd_pd(x2, ps, _mm512_set1_pd(kS7));
  ps = _mm512_fmadd_pd(x2, ps, _mm512_set1_pd(kS5));
  ps = _mm512_fmadd_pd(x2, ps, _mm512_set1_pd(kS3));
  const __m512d s = _mm512_fmadd_pd(_mm512_mul_pd(x, x2), ps, x);
  __m512d pc = _mm512_fmadd_pd(x2, _mm512_set1_pd(kC16), _mm512_set1_pd(kC14));
  pc = _mm512_fmadd_pd(x2, pc, _mm512_set1_pd(kC12));
  pc = _mm512_fmadd_pd(x2, pc, _mm512_set1_pd(kC10));
  pc = _mm512_fmadd_pd(x2, pc, _mm512_set1_pd(kC8));
  pc = _mm512_fmadd_pd(x2, pc, _mm512_set1_pd(kC6));
  pc = _mm512_fmadd_pd(x2, pc, _mm512_set1_pd(kC4));
  pc = _mm512_fmadd_pd(x2, pc, _mm512_set1_pd(kC2));
  const __m512d c = _mm512_fmadd_pd(x2, pc, _mm512_set1_pd(1.0));

  // quadrant q & 3: (s, c), (c, -s), (-s, -c), (-c, s)
  const __m512i qi = _mm512_cvtpd_epi64(q);
  const __m512i one = _mm512_set1_epi64(1);
  const __m512i two = _mm512_set1_epi64(2);
  const __mmask8 swap = _mm512_test_epi64_mask(qi, one);
  const __mmask8 neg_sin = _mm512_test_epi64_mask(qi, two);
  const __mmask8 neg_cos = _mm512_test_epi64_mask(_mm512_add_epi64(qi, one), two);
  const __m512i sign = _mm512_set1_epi64(static_cast<long long>(0x8000000000000000ULL));
  const __m512i a = _mm512_castpd_si512(_mm512_mask_blend_pd(swap, s, c));
  const __m512i b = _mm512_castpd_si512(_mm512_mask_blend_pd(swap, c, s));
  sn = _mm512_castsi512_pd(_mm512_mask_xor_epi64(a, neg_sin, a, sign));
  cs = _mm512_castsi512_pd(_mm512_mask_xor_epi64(b, neg_cos, b, sign));
}

inline void box_muller_pd(__m512i w0, __m512i w1, __m512d& za, __m512d& zb) {
  const __m512d radius = _mm512_sqrt_pd(_mm512_mul_pd(_mm512_set1_pd(-2.0), log_pd(to_unit(w0))));
  __m512d sn, cs;
  sincos_2pi_pd(to_unit(w1), sn, cs);
  za = _mm512_mul_pd(radius, cs);
  zb = _mm512_mul_pd(radius, sn);
}

inline __mmask8 finite_mask(__m512d v) {
  return _mm512_cmp_pd_mask(_mm512_abs_pd(v), _mm512_set1_pd(INFINITY), _CMP_LT_OQ);
}

inline double& lane(__m512d& v, int l) { return reinterpret_cast<double*>(&v)[l]; }

}  // namespace

void detect_avx512(const DetectionBatch& b, std::uint32_t first_path, std::size_t count, DetectionOutcome* out) {
  const std::size_t n = b.n_sensors;
  const std::size_t groups = (n + 3) / 4;
  const PhiloxKeys keys = schedule(rng::key_from_seed(b.seed));
  const __m512d vdt = _mm512_set1_pd(b.dt);
  const __m512d vsqdt = _mm512_set1_pd(std::sqrt(b.dt));
  const __m512d half = _mm512_set1_pd(0.5);
  const __m512d vneg_r = _mm512_set1_pd(-b.param);
  const __m512i vorigin = _mm512_set1_epi64(static_cast<long long>(b.origin_index));
  const __m512i vmax = _mm512_set1_epi64(static_cast<long long>(b.max_steps));

  std::vector<__m512d> z(n), u(n), m(n), xi(groups * 4), alpha(n);
  std::vector<__m512d> vconst(n), vc(n), vh(n);
  std::vector<__m512i> vchange(n), gword(groups);
  for (std::size_t i = 0; i < n; ++i) {
    vconst[i] = _mm512_set1_pd(b.param / b.c[i]);
    vc[i] = _mm512_set1_pd(b.c[i]);
    vh[i] = _mm512_set1_pd(b.h[i]);
    vchange[i] = _mm512_set1_epi64(static_cast<long long>(b.change_idx[i]));
  }
  for (std::size_t g = 0; g < groups; ++g) {
    gword[g] = _mm512_set1_epi64((static_cast<std::uint32_t>(rng::Stream::observation_noise) << 24) |
                                 (static_cast<std::uint32_t>(g) & 0x00FFFFFFu));
  }

  alignas(64) std::uint64_t step[kLanes] = {}, path[kLanes] = {};
  __m512d energy = _mm512_setzero_pd(), origin_energy = _mm512_setzero_pd();
  std::vector<double> yl(n);
  long long slot[kLanes];
  __mmask8 live = 0;
  std::size_t next = 0;

  const auto refill = [&](int l) {
    if (next < count) {
      slot[l] = static_cast<long long>(next);
      path[l] = first_path + static_cast<std::uint32_t>(next);
      ++next;
      live = static_cast<__mmask8>(live | (1u << l));
    } else {
      slot[l] = -1;
      path[l] = 0;
      live = static_cast<__mmask8>(live & ~(1u << l));
    }
    step[l] = 0;
    lane(energy, l) = 0.0;
    lane(origin_energy, l) = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      lane(z[i], l) = 0.0;
      lane(u[i], l) = 0.0;
      lane(m[i], l) = 0.0;
    }
  };
  for (int l = 0; l < kLanes; ++l) refill(l);

  const __m512i lo32 = _mm512_set1_epi64(0xffffffffLL);
  __m512i pc = _mm512_load_si512(path);
  while (live) {
    const __m512i k = _mm512_add_epi64(_mm512_load_si512(step), _mm512_set1_epi64(1));
    _mm512_store_si512(step, k);

    if (b.linear) {
      __m512d sum = _mm512_setzero_pd();
      for (std::size_t j = 0; j < n; ++j) sum = _mm512_add_pd(sum, z[j]);
      const __m512d base = _mm512_mul_pd(vneg_r, sum);
      for (std::size_t i = 0; i < n; ++i) {
        alpha[i] = _mm512_div_pd(base, vc[i]);
        const __mmask8 bad = static_cast<__mmask8>(~finite_mask(alpha[i]));
        if (bad) {
          for (int l = 0; l < kLanes; ++l) {
            if (!((bad >> l) & 1)) continue;
            if (slot[l] >= 0) throw_blowup(step[l], i);
            lane(alpha[i], l) = 0.0;
          }
        }
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) alpha[i] = vconst[i];
    }

    const __m512i kc0 = _mm512_and_si512(k, lo32);
    const __m512i kc1 = _mm512_srli_epi64(k, 32);
    for (std::size_t g = 0; g < groups; ++g) {
      __m512i c0 = kc0, c1 = kc1, c2 = pc, c3 = gword[g];
      philox(c0, c1, c2, c3, keys);
      box_muller_pd(c0, c1, xi[4 * g], xi[4 * g + 1]);
      if (4 * g + 2 < n) box_muller_pd(c2, c3, xi[4 * g + 2], xi[4 * g + 3]);  // skip unused deviates
    }

    __mmask8 crossed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const __m512d a = alpha[i];
      const __mmask8 active = _mm512_cmpgt_epi64_mask(k, vchange[i]);
      const __m512d drift_term = _mm512_maskz_mul_pd(active, a, vdt);
      const __m512d dz = _mm512_add_pd(drift_term, _mm512_mul_pd(vsqdt, xi[i]));
      const __m512d znew = _mm512_add_pd(z[i], dz);
      const __m512d dzobs = _mm512_sub_pd(znew, z[i]);
      z[i] = znew;
      const __m512d inc =
          _mm512_sub_pd(_mm512_mul_pd(a, dzobs), _mm512_mul_pd(_mm512_mul_pd(_mm512_mul_pd(half, a), a), vdt));
      u[i] = _mm512_add_pd(u[i], inc);
      if (const __mmask8 bad = static_cast<__mmask8>(~finite_mask(u[i]) & live); bad) {
        for (int l = 0; l < kLanes; ++l) {
          if ((bad >> l) & 1) throw_overflow(step[l], i);
        }
      }
      m[i] = _mm512_min_pd(u[i], m[i]);
      crossed |= _mm512_cmp_pd_mask(_mm512_sub_pd(u[i], m[i]), vh[i], _CMP_GE_OQ);
    }
    const __m512d a1 = alpha[0];
    energy = _mm512_add_pd(energy, _mm512_mul_pd(_mm512_mul_pd(_mm512_mul_pd(half, a1), a1), vdt));
    origin_energy = _mm512_mask_mov_pd(origin_energy, _mm512_cmpeq_epi64_mask(k, vorigin), energy);

    const __mmask8 done = static_cast<__mmask8>((crossed | _mm512_cmpge_epu64_mask(k, vmax)) & live);
    if (!done) continue;
    for (int l = 0; l < kLanes; ++l) {
      if (!((done >> l) & 1)) continue;
      const std::uint64_t kl = step[l];
      const bool hit = (crossed >> l) & 1;
      DetectionOutcome res;
      res.steps = kl;
      res.energy = lane(energy, l);
      res.delay_energy = kl > b.origin_index ? lane(energy, l) - lane(origin_energy, l) : 0.0;
      if (hit) {
        res.stopped = true;
        for (std::size_t i = 0; i < n; ++i) yl[i] = lane(u[i], l) - lane(m[i], l);
        res.firing = firing_sensor(yl.data(), b.h.data(), n, 1);
      }
      out[slot[l]] = res;
      refill(l);
    }
    pc = _mm512_load_si512(path);
  }
}

}  // namespace qdetect::simd::detail
