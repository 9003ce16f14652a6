#include "sslasr/alignment.hpp"

#include <algorithm>

namespace sslasr {

std::vector<AlignedPair> levenshtein_align(const WordSeq& ref, const WordSeq& hyp,
                                           const EditPreference& preference) {
  const std::size_t m = ref.size();
  const std::size_t n = hyp.size();
  std::vector<int> d((m + 1) * (n + 1));
  auto at = [&](std::size_t i, std::size_t j) -> int& { return d[i * (n + 1) + j]; };
  for (std::size_t i = 0; i <= m; ++i) at(i, 0) = static_cast<int>(i);
  for (std::size_t j = 0; j <= n; ++j) at(0, j) = static_cast<int>(j);
  for (std::size_t i = 1; i <= m; ++i) {
    for (std::size_t j = 1; j <= n; ++j) {
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1]), at(i - 1, j) + 1,
                           at(i, j - 1) + 1});
    }
  }

  std::vector<AlignedPair> out;
  out.reserve(m + n);
  std::size_t i = m, j = n;
  while (i > 0 || j > 0) {
    bool moved = false;
    for (EditOp op : preference) {
      if (op == EditOp::kSubstitution && i > 0 && j > 0 &&
          at(i, j) == at(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1])) {
        out.push_back({ref[i - 1] == hyp[j - 1] ? EditOp::kMatch : EditOp::kSubstitution,
                       static_cast<int>(i - 1), static_cast<int>(j - 1)});
        --i;
        --j;
        moved = true;
      } else if (op == EditOp::kDeletion && i > 0 && at(i, j) == at(i - 1, j) + 1) {
        out.push_back({EditOp::kDeletion, static_cast<int>(i - 1), -1});
        --i;
        moved = true;
      } else if (op == EditOp::kInsertion && j > 0 && at(i, j) == at(i, j - 1) + 1) {
        out.push_back({EditOp::kInsertion, -1, static_cast<int>(j - 1)});
        --j;
        moved = true;
      }
      if (moved) break;
    }
  }
  std::reverse(out.begin(), out.end());
  return out;
}

}  // namespace sslasr
