// Signal -> time-frequency map pipeline: Morlet CWT, min-max normalization,
// fixed colormap, separable natural-cubic-spline resize.

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "wtfd/signal.hpp"

namespace wtfd::tfm {

struct TimeFrequencyRepresentation {
  std::size_t n_scales = 0;
  std::size_t n_times = 0;
  std::vector<double> magnitudes;  // row-major, scales x times
  std::vector<double> scales;      // scaling parameter a, seconds
  std::vector<double> times;       // translation tau, seconds
};

struct TimeFrequencyMap {
  std::size_t h = 0, w = 0, c = 3;
  std::vector<float> pixels;  // row-major (h, w, c), each in [0,1]
  std::string source_id;
};

struct TfmConfig {
  std::size_t target_size = 32;  // paper-scale runs use 224
  std::size_t n_scales = 64;
};

// Morlet center frequency: f_c(a) = omega0 / (2 pi a), omega0 = 6.
double scale_to_frequency(double scale);
double frequency_to_scale(double frequency_hz);

// Log-spaced scales covering center frequencies sample_rate/window_length up
// to sample_rate/4, ordered from low to high frequency.
std::vector<double> default_scales(double sample_rate,
                                   std::size_t window_length,
                                   std::size_t n_scales);

TimeFrequencyRepresentation cwt(const sig::VibrationSignal& signal,
                                const std::vector<double>& scales);
// Complex coefficients before the magnitude, for linearity checks.
void cwt_complex(const sig::VibrationSignal& signal,
                 const std::vector<double>& scales, std::vector<double>& re,
                 std::vector<double>& im);

TimeFrequencyRepresentation normalize(TimeFrequencyRepresentation tfr);

// Normalized magnitudes -> RGB in [0,1], n_scales x n_times x 3.
std::vector<double> colormap(const TimeFrequencyRepresentation& tfr);

std::vector<double> resize_cubic(const std::vector<double>& image,
                                 std::size_t src_h, std::size_t src_w,
                                 std::size_t channels, std::size_t target_h,
                                 std::size_t target_w);

TimeFrequencyMap preprocess(const sig::VibrationSignal& signal,
                            const TfmConfig& config);

void save_tfm(const std::filesystem::path& path, const TimeFrequencyMap& map);
TimeFrequencyMap load_tfm(const std::filesystem::path& path);

}  // namespace wtfd::tfm
