#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <limits>
#include <vector>

#include "lse/rng.hpp"
#include "lse/tensor.hpp"

namespace lse::signal {

struct GeneratorConfig {
  double sampling_period = 0.27e-3;  // T, seconds
  std::size_t window_length = 64;    // K
  double carrier_hz = 60e9;          // f_c; informational
  std::size_t max_components = 5;    // M_max
  std::vector<double> snr_db_set{5.0, 10.0, 15.0, 20.0};
  std::size_t windows_per_count = 3000;
  std::array<double, 3> split{0.75, 0.15, 0.10};  // train, val, test
  std::uint64_t seed = 0;

  /// Throws InputDomainError on violated invariants.
  void validate() const;
  double max_frequency_hz() const noexcept { return 1.0 / (2.0 * sampling_period); }
  std::size_t total_windows() const noexcept { return windows_per_count * max_components; }
};

/// Noise-free marker for GroundTruth::snr_db.
inline constexpr double kNoiseless = std::numeric_limits<double>::infinity();

/// Sinusoid parameters of one window. Active components come first, sorted
/// by ascending frequency; the max_components - m_active trailing slots hold
/// f = 0, a = 0, phase = 0.
///
/// Inside a RealWindow the same struct carries the network targets: freqs
/// are then normalized by 2T into [0, 1].
struct GroundTruth {
  std::vector<double> freqs;
  std::vector<double> amps;
  std::vector<double> phases;
  std::size_t m_active = 0;
  double snr_db = kNoiseless;
};

struct ChannelWindow {
  std::vector<std::complex<double>> samples;
  GroundTruth gt;
};

/// values = (raw - offset) / scale
struct Normalization {
  double offset = 0.0;
  double scale = 1.0;
};

/// Network-ready window: (2, K) tensor, row 0 real part, row 1 imaginary
/// part, jointly min-max normalized into [0, 1].
struct RealWindow {
  Tensor<double> values;
  Normalization norm;
  GroundTruth target;

  std::size_t length() const { return values.dim(1); }
  std::span<const double> channel(std::size_t c) const {
    return values.data().subspan(c * length(), length());
  }
};

enum class Split { train, val, test };

struct Dataset {
  GeneratorConfig config;
  std::vector<RealWindow> windows;  // generation order
  std::vector<std::size_t> train;   // indices into windows
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  const std::vector<std::size_t>& partition(Split s) const;
};

GroundTruth sample_ground_truth(std::size_t m_active, const GeneratorConfig& cfg,
                                Rng& rng);

/// x[k] = sum_m a_m exp(j(2 pi f_m k T + phi_m)) + w[k], with complex white
/// Gaussian w of total variance sum_m a_m^2 / 10^(snr_db / 10).
ChannelWindow generate_window(const GroundTruth& gt, const GeneratorConfig& cfg,
                              Rng& rng);

RealWindow to_real_window(const ChannelWindow& w, const GeneratorConfig& cfg);

/// Inverse of the normalization applied by to_real_window.
Tensor<double> denormalize(const RealWindow& w);

Dataset build_dataset(const GeneratorConfig& cfg);

/// n_windows fresh windows, all at one SNR, m_active cycling over
/// 1..max_components. Used for noise-robustness test sets.
std::vector<RealWindow> build_fixed_snr_windows(const GeneratorConfig& cfg,
                                                double snr_db, std::size_t n_windows,
                                                std::uint64_t seed);

}  // namespace lse::signal
