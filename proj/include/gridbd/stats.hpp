#pragma once

#include <vector>

namespace gridbd {

struct MeanInterval {
    double mean = 0.0;
    double half_width = 0.0;  // 0 for a single observation
    int count = 0;
};

// Student-t interval for the mean of `values`.
MeanInterval mean_interval(const std::vector<double>& values, double confidence = 0.95);

// 1-based ranks, ties share their average rank.
std::vector<double> average_ranks(const std::vector<double>& values);

// Pearson correlation of the average ranks. NaN when either side is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace gridbd
