#include "rswitch/dataset.hpp"

#include <algorithm>
#include <stdexcept>

#include "rswitch/switching.hpp"

namespace rswitch {

long Dataset::max_y() const {
  long m = 0;
  for (long v : y) m = std::max(m, v);
  return m;
}

PeriodIndex group_by_period(const Dataset& data, const SwitchingLayout& layout) {
  PeriodIndex idx;
  const size_t R = data.n_rows();
  idx.period_of_row.resize(R);
  std::vector<int> counts(layout.T_tilde + 1, 0);
  for (size_t i = 0; i < R; ++i) {
    const int tt = layout.to_aux(data.t[i], data.n[i]).t_tilde;
    idx.period_of_row[i] = tt;
    ++counts[tt];
  }
  idx.offsets.assign(layout.T_tilde + 1, 0);
  for (int t = 1; t <= layout.T_tilde; ++t) idx.offsets[t] = idx.offsets[t - 1] + counts[t];
  std::vector<int> cursor(idx.offsets.begin(), idx.offsets.end() - 1);
  idx.rows.resize(R);
  for (size_t i = 0; i < R; ++i) idx.rows[cursor[idx.period_of_row[i] - 1]++] = static_cast<int>(i);
  return idx;
}

}  // namespace rswitch
