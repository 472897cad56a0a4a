#pragma once

#include <span>
#include <string>
#include <vector>

namespace rswitch {

struct SwitchingLayout;

// Observations keyed by real indices (t, n) with a shared covariate design.
// Row i: period t[i], unit n[i], response y[i] (count, or 1-based outcome for
// multinomial data), covariates X[i*n_cov .. (i+1)*n_cov).
struct Dataset {
  std::vector<std::string> cov_names;
  int n_cov = 0;
  std::vector<int> t, n;
  std::vector<long> y;
  std::vector<double> X;

  size_t n_rows() const { return y.size(); }
  std::span<const double> x_row(size_t i) const {
    return {X.data() + i * static_cast<size_t>(n_cov), static_cast<size_t>(n_cov)};
  }
  long max_y() const;
};

// Rows grouped by auxiliary period: rows_of(t~) spans rows[offsets[t~-1] ..
// offsets[t~]), preserving file order within a period.
struct PeriodIndex {
  std::vector<int> offsets;  // size T_tilde + 1
  std::vector<int> rows;
  std::vector<int> period_of_row;  // 1-based t~

  std::span<const int> rows_of(int t_tilde) const {
    return {rows.data() + offsets[t_tilde - 1],
            static_cast<size_t>(offsets[t_tilde] - offsets[t_tilde - 1])};
  }
};

PeriodIndex group_by_period(const Dataset& data, const SwitchingLayout& layout);

}  // namespace rswitch
