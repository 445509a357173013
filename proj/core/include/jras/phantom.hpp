#pragma once

#include <cstdint>
#include <string>

#include "jras/dataset.hpp"

namespace jras {

struct ToySpec {
  int num_patients = 4;
  int slices_per_phase = 3;
  int height = 64;
  int width = 64;
  std::uint64_t seed = 7;
  // Patient ids are `<id_prefix><id_offset + i>` zero-padded to three
  // digits. A distinct prefix/offset gives a disjoint "external" dataset.
  std::string id_prefix = "P";
  int id_offset = 1;
};

inline constexpr int kToyNumClasses = 4;
inline constexpr std::uint8_t kLabelRV = 1;
inline constexpr std::uint8_t kLabelMYO = 2;
inline constexpr std::uint8_t kLabelLV = 3;

// Synthetic short-axis cardiac phantoms: LV disk inside a MYO ring with an
// RV crescent wrapped around one side, on a noisy background. Geometry
// varies smoothly with slice index and ES slices are contracted. Every mask
// holds all four labels, each one 4-connected region. Images are already
// min-max normalised and float32-exact, so save/load round-trips bitwise.
Dataset generate_toy_dataset(const ToySpec& spec);

}  // namespace jras
