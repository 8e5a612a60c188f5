#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <fftw3.h>

#include "preblock/bytes.hpp"
#include "preblock/error.hpp"
#include "preblock/wav.hpp"

namespace preblock {

inline constexpr int kFeatureSampleRate = 16000;
inline constexpr std::size_t kFftSize = 1024;
inline constexpr std::size_t kHopLength = 512;
inline constexpr std::size_t kMelBins = 128;
inline constexpr double kMelFmin = 0.0;
inline constexpr double kMelFmax = kFeatureSampleRate / 2.0;
inline constexpr double kLogEpsilon = 1e-6;
inline constexpr double kStdFloor = 1e-5;
/// Samples in a 3 s clip and its frame count.
inline constexpr std::size_t kClipSamples = 3 * kFeatureSampleRate;
inline constexpr std::size_t kClipFrames = 1 + kClipSamples / kHopLength; // 94

/// Mel bins x frames, row-major (one row per mel band).
struct FeatureTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;
  bool normalized = false;

  FeatureTensor() = default;
  FeatureTensor(std::size_t r, std::size_t c, float fill = 0.0f)
      : rows(r), cols(c), data(r * c, fill) {}

  float &at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  friend bool operator==(const FeatureTensor &, const FeatureTensor &) = default;
};

inline std::size_t frame_count(std::size_t samples) {
  return 1 + samples / kHopLength;
}

/// HTK mel scale.
inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

/// Triangular filters with unit peak, kMelBins rows x (kFftSize/2 + 1)
/// columns, centers evenly spaced on the mel scale over [fmin, fmax].
inline std::vector<double> mel_filterbank() {
  constexpr std::size_t n_freqs = kFftSize / 2 + 1;
  std::vector<double> edges(kMelBins + 2);
  const double mel_lo = hz_to_mel(kMelFmin), mel_hi = hz_to_mel(kMelFmax);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(kMelBins + 1));
  std::vector<double> fb(kMelBins * n_freqs, 0.0);
  for (std::size_t m = 0; m < kMelBins; ++m) {
    const double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < n_freqs; ++k) {
      const double f = static_cast<double>(k) * kFeatureSampleRate / kFftSize;
      const double rising = (f - lo) / (center - lo);
      const double falling = (hi - f) / (hi - center);
      fb[m * n_freqs + k] = std::max(0.0, std::min(rising, falling));
    }
  }
  return fb;
}

/// Log-mel front end: periodic Hann window, centered reflect padding, power
/// spectrum, mel filterbank, ln(mel + 1e-6). One instance can be shared by
/// threads; log_mel is const and reentrant.
class MelFrontEnd {
public:
  MelFrontEnd() : filterbank_(mel_filterbank()), window_(kFftSize) {
    for (std::size_t n = 0; n < kFftSize; ++n)
      window_[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi *
                                        static_cast<double>(n) / kFftSize);
    // Nonzero support of each band; the product skips the zero tails.
    constexpr std::size_t n_freqs = kFftSize / 2 + 1;
    for (std::size_t m = 0; m < kMelBins; ++m) {
      const double *w = &filterbank_[m * n_freqs];
      std::size_t lo = 0, hi = n_freqs;
      while (lo < n_freqs && w[lo] == 0.0)
        ++lo;
      while (hi > lo && w[hi - 1] == 0.0)
        --hi;
      support_[m] = {lo, hi};
    }
    Buffer<double> in(kFftSize);
    Buffer<fftw_complex> out(kFftSize / 2 + 1);
    std::lock_guard lock(planner_mutex());
    plan_.reset(fftw_plan_dft_r2c_1d(static_cast<int>(kFftSize), in.get(),
                                     out.get(), FFTW_ESTIMATE));
    if (!plan_)
      throw std::runtime_error("fftw: planning failed");
  }

  FeatureTensor log_mel(const Waveform &wave) const {
    if (wave.sample_rate != kFeatureSampleRate)
      throw ContractError("log_mel: sample rate " +
                          std::to_string(wave.sample_rate) +
                          " Hz, expected 16000 Hz");
    if (wave.samples.empty())
      throw ContractError("log_mel: empty waveform");
    constexpr std::size_t n_freqs = kFftSize / 2 + 1;
    constexpr auto pad = static_cast<std::ptrdiff_t>(kFftSize / 2);
    const std::size_t len = wave.samples.size();
    const std::size_t frames = frame_count(len);

    Buffer<double> in(kFftSize);
    Buffer<fftw_complex> out(n_freqs);
    std::vector<double> power(n_freqs);
    FeatureTensor feats(kMelBins, frames);
    for (std::size_t t = 0; t < frames; ++t) {
      const auto origin = static_cast<std::ptrdiff_t>(t * kHopLength) - pad;
      for (std::size_t n = 0; n < kFftSize; ++n)
        in.get()[n] = window_[n] *
                      wave.samples[reflect(origin + static_cast<std::ptrdiff_t>(n), len)];
      fftw_execute_dft_r2c(plan_.get(), in.get(), out.get());
      for (std::size_t k = 0; k < n_freqs; ++k) {
        const double re = out.get()[k][0], im = out.get()[k][1];
        power[k] = re * re + im * im;
      }
      for (std::size_t m = 0; m < kMelBins; ++m) {
        const double *w = &filterbank_[m * n_freqs];
        double acc = 0.0;
        for (std::size_t k = support_[m].first; k < support_[m].second; ++k)
          acc += w[k] * power[k];
        feats.at(m, t) = static_cast<float>(std::log(acc + kLogEpsilon));
      }
    }
    return feats;
  }

  /// Index into a signal of length len under numpy-style "reflect" padding
  /// (edge sample not repeated), extended periodically for any offset.
  static std::size_t reflect(std::ptrdiff_t i, std::size_t len) {
    if (len == 1)
      return 0;
    const auto period = static_cast<std::ptrdiff_t>(2 * (len - 1));
    i %= period;
    if (i < 0)
      i += period;
    const auto n = static_cast<std::ptrdiff_t>(len);
    return static_cast<std::size_t>(i < n ? i : period - i);
  }

private:
  template <typename T> struct Buffer {
    explicit Buffer(std::size_t n)
        : ptr(static_cast<T *>(fftw_malloc(sizeof(T) * n))) {
      if (!ptr)
        throw std::bad_alloc();
    }
    ~Buffer() { fftw_free(ptr); }
    Buffer(const Buffer &) = delete;
    Buffer &operator=(const Buffer &) = delete;
    T *get() const { return ptr; }
    T *ptr;
  };

  struct PlanDeleter {
    void operator()(fftw_plan_s *p) const {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(p);
    }
  };

  // The FFTW planner is not thread-safe; execution is.
  static std::mutex &planner_mutex() {
    static std::mutex m;
    return m;
  }

  std::vector<double> filterbank_;
  std::vector<double> window_;
  std::array<std::pair<std::size_t, std::size_t>, kMelBins> support_{};
  std::unique_ptr<fftw_plan_s, PlanDeleter> plan_;
};

inline const MelFrontEnd &default_front_end() {
  static const MelFrontEnd fe;
  return fe;
}

/// Unnormalized log-mel features of a 16 kHz mono waveform.
inline FeatureTensor log_mel(const Waveform &wave) {
  return default_front_end().log_mel(wave);
}

/// Per-clip standardization: (x - mean) / max(std, 1e-5), population std.
inline FeatureTensor normalize(FeatureTensor f) {
  if (f.normalized)
    throw ContractError("normalize: features already normalized");
  if (f.data.empty())
    throw ContractError("normalize: empty feature tensor");
  double sum = 0.0;
  for (float v : f.data)
    sum += v;
  const double mean = sum / static_cast<double>(f.data.size());
  double sq = 0.0;
  for (float v : f.data)
    sq += (v - mean) * (v - mean);
  const double sd =
      std::max(std::sqrt(sq / static_cast<double>(f.data.size())), kStdFloor);
  for (float &v : f.data)
    v = static_cast<float>((v - mean) / sd);
  f.normalized = true;
  return f;
}

inline FeatureTensor featurize(const Waveform &wave) {
  return normalize(log_mel(wave));
}

/// Zeroes the last n_frames columns; other cells are untouched.
inline FeatureTensor mask_tail(FeatureTensor f, std::size_t n_frames) {
  if (!f.normalized)
    throw ContractError("mask_tail: features must be normalized");
  if (n_frames > f.cols)
    throw ContractError("mask_tail: " + std::to_string(n_frames) +
                        " frames requested on a " + std::to_string(f.cols) +
                        "-frame tensor");
  for (std::size_t r = 0; r < f.rows; ++r)
    std::fill_n(f.data.begin() + static_cast<std::ptrdiff_t>(r * f.cols + f.cols - n_frames),
                n_frames, 0.0f);
  return f;
}

// Feature cache "PBF1": magic, u32 rows, u32 cols (little-endian), then
// rows*cols IEEE binary16 values row-major, little-endian.

inline std::uint16_t to_half_bits(float v) {
  return Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(v));
}

inline float from_half_bits(std::uint16_t bits) {
  return static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(bits));
}

inline std::string encode_feature_cache(const FeatureTensor &f) {
  if (!f.normalized)
    throw ContractError("cache_write: features must be normalized");
  std::string out = "PBF1";
  detail::put_u32le(out, static_cast<std::uint32_t>(f.rows));
  detail::put_u32le(out, static_cast<std::uint32_t>(f.cols));
  out.reserve(out.size() + 2 * f.data.size());
  for (float v : f.data)
    detail::put_u16le(out, to_half_bits(v));
  return out;
}

inline FeatureTensor decode_feature_cache(const std::string &bytes) {
  if (bytes.size() < 12 || bytes.compare(0, 4, "PBF1") != 0)
    throw BadMagicError("feature cache: bad magic");
  const auto *p = reinterpret_cast<const unsigned char *>(bytes.data());
  const std::size_t rows = detail::read_u32le(p + 4);
  const std::size_t cols = detail::read_u32le(p + 8);
  if (bytes.size() != 12 + 2 * rows * cols)
    throw FormatError("feature cache: " + std::to_string(rows) + "x" +
                      std::to_string(cols) + " header does not match " +
                      std::to_string(bytes.size()) + "-byte file");
  FeatureTensor f(rows, cols);
  for (std::size_t i = 0; i < f.data.size(); ++i)
    f.data[i] = from_half_bits(detail::read_u16le(p + 12 + 2 * i));
  f.normalized = true;
  return f;
}

inline void cache_write(const FeatureTensor &f, const std::filesystem::path &path) {
  const auto bytes = encode_feature_cache(f);
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw FormatError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline FeatureTensor cache_read(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw FormatError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return decode_feature_cache(bytes);
}

} // namespace preblock
