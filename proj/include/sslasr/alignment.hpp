#pragma once

#include <array>
#include <vector>

#include "sslasr/common.hpp"

namespace sslasr {

enum class EditOp { kMatch, kSubstitution, kDeletion, kInsertion };

/// One column of a reference/hypothesis alignment. Absent sides are -1.
struct AlignedPair {
  EditOp op;
  int ref_index;
  int hyp_index;
};

/// Preference among equally cheap backtrace moves. Matches are folded into
/// kSubstitution (the diagonal move).
using EditPreference = std::array<EditOp, 3>;

inline constexpr EditPreference kPreferSubDelIns{EditOp::kSubstitution, EditOp::kDeletion,
                                                 EditOp::kInsertion};
inline constexpr EditPreference kPreferSubInsDel{EditOp::kSubstitution, EditOp::kInsertion,
                                                 EditOp::kDeletion};

/// Unit-cost Levenshtein alignment in left-to-right order.
std::vector<AlignedPair> levenshtein_align(const WordSeq& ref, const WordSeq& hyp,
                                           const EditPreference& preference);

}  // namespace sslasr
