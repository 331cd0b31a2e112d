#include <cstdlib>
#include <string>

#include "qdetect/errors.hpp"
#include "qdetect/simd/batch.hpp"

namespace qdetect::simd {

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(QDETECT_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::avx512:
#if defined(QDETECT_HAVE_AVX512)
      return isa_available(Isa::avx2) && __builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512dq") &&
             __builtin_cpu_supports("avx512vl");
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() {
  static const Isa chosen = [] {
    Isa cap = Isa::avx512;
    if (const char* env = std::getenv("QDETECT_SIMD"); env != nullptr) {
      const std::string want(env);
      if (want == "scalar") cap = Isa::scalar;
      if (want == "avx2") cap = Isa::avx2;
    }
    for (Isa isa : {Isa::avx512, Isa::avx2}) {
      if (static_cast<int>(isa) <= static_cast<int>(cap) && isa_available(isa)) return isa;
    }
    return Isa::scalar;
  }();
  return chosen;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::avx2: return "avx2";
    case Isa::avx512: return "avx512";
    default: return "scalar";
  }
}

void detect(const DetectionBatch& batch, std::uint32_t first_path, std::size_t count, DetectionOutcome* out,
            Isa isa) {
  require(batch.n_sensors > 0 && batch.c.size() == batch.n_sensors && batch.h.size() == batch.n_sensors,
          "malformed detection batch");
#if defined(QDETECT_HAVE_AVX512)
  if (isa == Isa::avx512 && isa_available(Isa::avx512)) {
    detail::detect_avx512(batch, first_path, count, out);
    return;
  }
#endif
#if defined(QDETECT_HAVE_AVX2)
  if ((isa == Isa::avx2 || isa == Isa::avx512) && isa_available(Isa::avx2)) {
    detail::detect_avx2(batch, first_path, count, out);
    return;
  }
#endif
  detail::detect_scalar(batch, first_path, count, out);
}

void detect(const DetectionBatch& batch, std::uint32_t first_path, std::size_t count, DetectionOutcome* out) {
  detect(batch, first_path, count, out, active_isa());
}

void reflected(const ReflectedBatch& batch, std::uint32_t first_path, std::size_t count, ReflectedOutcome* out,
               Isa isa) {
  require(batch.n_sensors > 0 && batch.drift.size() == batch.n_sensors && batch.sigma.size() == batch.n_sensors &&
              batch.h.size() == batch.n_sensors,
          "malformed reflected batch");
  require(batch.n_sensors <= 1024 && batch.depth >= 0 && batch.depth <= 13, "reflected batch out of range");
#if defined(QDETECT_HAVE_AVX2)
  if ((isa == Isa::avx2 || isa == Isa::avx512) && isa_available(Isa::avx2)) {
    detail::reflected_avx2(batch, first_path, count, out);
    return;
  }
#endif
  detail::reflected_scalar(batch, first_path, count, out);
}

void reflected(const ReflectedBatch& batch, std::uint32_t first_path, std::size_t count, ReflectedOutcome* out) {
  reflected(batch, first_path, count, out, active_isa());
}

}  // namespace qdetect::simd
