#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psfsim/image.hpp"

namespace psfsim {

/// Transfer curve applied when quantized formats (PNG, PGM) are converted to
/// or from the internal linear scale. PFM is always linear.
enum class GammaMode {
    linear,
    srgb,
};

/// PFM, 32-bit float, grayscale ("Pf") or 3-channel ("PF"), little endian.
/// This is the lossless interchange path; no gamma is ever applied.
Image read_pfm(const std::string& path);
void write_pfm(const std::string& path, const Image& img);

/// PNG via zlib, 8- or 16-bit, gray / gray+alpha / RGB / RGBA (alpha is
/// dropped on read). Interlaced files are rejected.
Image read_png(const std::string& path, GammaMode gamma = GammaMode::srgb);
void write_png(const std::string& path, const Image& img,
               GammaMode gamma = GammaMode::srgb, int bit_depth = 16);

/// Binary 16-bit PGM (P5, maxval 65535), used for depth buffers.
std::vector<double> read_pgm16(const std::string& path, int& width, int& height);
void write_pgm16(const std::string& path, const std::vector<double>& values01,
                 int width, int height);

/// Dispatch by extension: .pfm or .png.
Image read_image(const std::string& path, GammaMode gamma = GammaMode::srgb);
void write_image(const std::string& path, const Image& img,
                 GammaMode gamma = GammaMode::srgb);

double srgb_to_linear(double v);
double linear_to_srgb(double v);

} // namespace psfsim
