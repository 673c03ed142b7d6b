#pragma once

#include <string>

#include "psdf/gaussian_psd.hpp"
#include "psdf/generalized_psd.hpp"

namespace psdf {

// Structured text round-trip for models. Doubles are printed in shortest
// round-trip form, so save/load is bit-exact for finite values.
//
// Layout (whitespace separated):
//   gaussian_psd_model 1
//   groups <count> { <name> <dim> }...
//   order <m>
//   log_scale <v>
//   precision <d values>
//   anchors <m rows of d values>
//   weights <m rows of m values>
//   end
//
// The generalized container shares the header and adds an entry table:
//   generalized_psd_model 1
//   groups ... order ... log_scale ...
//   weights <m rows>
//   entry <i> <j> log_constant <v> center <d values> precision <d*d values row-major>
//   ... (one record per i <= j)
//   end
std::string to_text(const GaussianPsdModel& m);
std::string to_text(const GeneralizedPsdModel& m);

GaussianPsdModel gaussian_psd_from_text(const std::string& text);
GeneralizedPsdModel generalized_psd_from_text(const std::string& text);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

// Shortest decimal form that reparses to the same bits.
std::string double_to_string(double v);
double double_from_string(const std::string& s);

// 64-bit FNV-1a over the bytes of a string.
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace psdf
