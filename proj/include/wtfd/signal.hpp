// Synthetic bearing-fault vibration signals plus raw-signal ingestion and
// windowed segmentation.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace wtfd::sig {

struct VibrationSignal {
  std::vector<float> samples;
  double sample_rate = 0.0;
  int label = -1;  // class id; -1 means unlabeled
};

struct SegmentSpec {
  std::size_t window_length = 1024;
  std::size_t stride = 1024;  // non-overlapping by default
};

// Fault-class catalogue. Class 0 is the healthy baseline; faulted classes are
// told apart by their impulse repetition frequency and resonance band.
struct FaultClassInfo {
  const char* name;
  double impulse_hz;    // 0 = no impulse train
  double resonance_hz;  // carrier excited by each impulse
  double decay_s;       // exponential decay time constant
  double impulse_amp;
  double rotation_amp;  // amplitude of the shaft-rotation sinusoid
  double harmonic2_amp; // second rotation harmonic
};

std::size_t class_catalogue_size();
const FaultClassInfo& class_info(int class_id);
int class_id_by_name(const std::string& name);  // -1 when unknown

VibrationSignal synth_fault_signal(int class_id, std::size_t duration_samples,
                                   double sample_rate, double noise_std,
                                   std::uint64_t seed);

VibrationSignal load_signal(const std::filesystem::path& path,
                            double sample_rate);
void save_signal_text(const std::filesystem::path& path,
                      const VibrationSignal& s);
void save_signal_binary(const std::filesystem::path& path,
                        const VibrationSignal& s);

std::vector<VibrationSignal> segment(const VibrationSignal& signal,
                                     const SegmentSpec& spec);

}  // namespace wtfd::sig
