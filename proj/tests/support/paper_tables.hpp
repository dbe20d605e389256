#pragma once

// Published reference data used as frozen expected values: per-model fit
// parameters and statistics, plus the actual/fitted coverage columns at
// k = 2^0 .. 2^10 (all in percent).

#include <array>
#include <cstddef>
#include <string_view>

namespace reference_tables {

inline constexpr std::size_t kNumPoints = 11;  // k = 2^0 .. 2^10

struct ModelFitRow {
  std::string_view name;
  double a;
  double b;
  double r2;
  double rmse_pct;
  double mae_pct;
  std::array<double, kNumPoints> actual_pct;
  std::array<double, kNumPoints> fitted_pct;
};

inline constexpr ModelFitRow kLlama32_3B = {
    "Llama-3.2-3B-Instruct",
    -1.793,
    -0.191,
    0.986,
    1.745,
    1.583,
    {13.50, 19.00, 25.88, 31.32, 36.36, 41.16, 46.28, 50.04, 52.96, 56.72, 59.36},
    {16.64, 20.78, 25.24, 29.92, 34.74, 39.60, 44.41, 49.10, 53.62, 57.92, 61.97},
};

inline constexpr ModelFitRow kLlama31_8B = {
    "Llama-3.1-8B-Instruct",
    -1.263,
    -0.183,
    0.987,
    1.541,
    1.267,
    {25.53, 32.20, 37.97, 42.93, 48.63, 53.37, 56.73, 59.60, 63.17, 65.33, 67.83},
    {28.27, 32.87, 37.54, 42.20, 46.78, 51.22, 55.47, 59.52, 63.32, 66.87, 70.16},
};

inline constexpr ModelFitRow kQwen3_8B = {
    "Qwen3-8B",
    -1.370,
    -0.111,
    0.984,
    1.115,
    0.906,
    {22.92, 27.56, 31.80, 34.84, 37.84, 40.40, 42.56, 45.20, 47.52, 50.04, 51.64},
    {25.42, 28.14, 30.91, 33.73, 36.56, 39.39, 42.21, 45.00, 47.75, 50.44, 53.07},
};

inline constexpr ModelFitRow kQwen25_14B = {
    "Qwen2.5-14B-Instruct",
    -1.174,
    -0.163,
    0.989,
    1.265,
    1.029,
    {28.10, 34.97, 39.83, 44.57, 48.87, 52.37, 55.83, 59.17, 61.80, 64.60, 66.73},
    {30.91, 35.05, 39.22, 43.35, 47.41, 51.35, 55.15, 58.78, 62.22, 65.46, 68.50},
};

inline constexpr std::array<const ModelFitRow*, 4> kAllModels = {
    &kLlama32_3B, &kLlama31_8B, &kQwen3_8B, &kQwen25_14B};

inline double k_at(std::size_t i) { return static_cast<double>(1ULL << i); }

}  // namespace reference_tables
