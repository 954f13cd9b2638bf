#pragma once

#include <filesystem>

#include "vguard/waveform.hpp"

namespace vguard {

// RIFF/WAVE, PCM, mono, 16-bit little-endian at the corpus rate.
// Anything else is rejected with a diagnostic naming the offending field.
Waveform read_wav(const std::filesystem::path& path, int expected_rate = 16000);

// Samples are expected in [-1, 1]; values outside are clamped to full scale.
void write_wav(const std::filesystem::path& path, const Waveform& w);

}  // namespace vguard
