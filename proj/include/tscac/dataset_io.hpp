#pragma once

// Line-oriented text format for ReplayDataset.
//
//   # tscac-dataset 1
//   # m = <response count>
//   # <key> = <value>              (free-form metadata, e.g. n_items)
//   session_id<TAB>t<TAB>f1,f2,...<TAB>action_index<TAB>behavior_prob<TAB>r1,...,rm<TAB>done
//
// One transition per line; the lines of a session are contiguous with t
// counting 0,1,2,...; `-` marks an absent action_index or behavior_prob; done
// is 0 or 1 and must be 1 exactly on the last line of every session. The next
// state of a transition is the state of the following line; a terminal next
// state carries zero features. Reals are written so they read back exactly.

#include <filesystem>
#include <iosfwd>

#include "tscac/cmdp.hpp"

namespace tscac {

void write_dataset(const ReplayDataset& dataset, std::ostream& os);
void write_dataset(const ReplayDataset& dataset, const std::filesystem::path& path);

// Strict parser; errors carry the offending line number.
ReplayDataset read_dataset(std::istream& is);
ReplayDataset read_dataset(const std::filesystem::path& path);

}  // namespace tscac
