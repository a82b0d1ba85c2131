#pragma once

#include <array>
#include <string_view>
#include <vector>

namespace published {

// Per-block CRM, percent, and the (||Sigma^-1 X||, ||W_s||, ||W_u||)
// components for four published 8-block models.
struct ModelCrm {
  std::string_view name;
  std::array<double, 8> crm;
  std::array<double, 8> percent;
  std::array<double, 8> nvp;
  std::array<double, 8> ws;
  std::array<double, 8> wu;
  std::vector<std::size_t> stacked;  // bolded dominant blocks, selection order
};

inline const std::array<ModelCrm, 4> kCrmTables{{
    {"Img128cond",
     {6.52, 7.03, 3.08, 13.63, 9.66, 9.17, 70.54, 5.05},
     {5.22, 5.63, 2.47, 10.93, 7.74, 7.35, 56.57, 4.05},
     {20.06, 14.77, 13.65, 33.65, 43.65, 53.86, 131.84, 26.08},
     {0.31, 0.46, 0.19, 0.40, 0.21, 0.16, 0.53, 0.18},
     {0.24, 0.18, 0.37, 0.17, 0.26, 0.26, 0.19, 0.17},
     {6}},
    {"AFHQ",
     {51.85, 51.45, 66.76, 64.98, 73.77, 84.05, 76.64, 348.51},
     {6.33, 6.28, 8.16, 7.94, 9.01, 10.27, 9.36, 42.60},
     {52.78, 39.32, 34.70, 73.39, 118.90, 159.91, 153.54, 286.83},
     {0.96, 1.28, 1.90, 0.87, 0.61, 0.51, 0.49, 1.21},
     {0.86, 0.75, 0.73, 0.65, 0.94, 0.96, 0.94, 0.93},
     {7}},
    {"Img64uncond",
     {22.29, 1.06, 1.01, 1.48, 0.77, 0.58, 14.78, 1.95},
     {50.71, 2.42, 2.29, 3.38, 1.77, 1.33, 33.62, 4.44},
     {53.48, 8.00, 8.55, 13.79, 8.36, 8.06, 40.50, 13.97},
     {0.41, 0.11, 0.08, 0.09, 0.06, 0.05, 0.36, 0.12},
     {0.10, 0.12, 0.24, 0.12, 0.25, 0.13, 0.13, 0.26},
     {0, 6}},
    {"Img64cond",
     {141.22, 9.25, 1.36, 1.82, 7.68, 5.08, 3.08, 19.81},
     {74.58, 4.88, 0.72, 0.96, 4.05, 2.68, 1.62, 10.46},
     {82.72, 14.26, 4.53, 7.61, 25.09, 27.44, 12.26, 56.91},
     {1.70, 0.59, 0.16, 0.16, 0.29, 0.17, 0.21, 0.34},
     {0.42, 0.78, 0.59, 0.53, 0.33, 0.38, 0.45, 0.28},
     {0, 7}},
}};

}  // namespace published
