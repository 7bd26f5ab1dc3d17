#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dashql/analyzer.hpp"

namespace dashql {

enum class Verdict : uint8_t { EQUAL, UPDATED, NEW, DELETED };
std::string_view to_string(Verdict v);

struct DiffEntry {
    std::optional<uint32_t> prev;
    std::optional<uint32_t> next;
    Verdict verdict = Verdict::NEW;
    double similarity = 0.0;
};

struct ScriptDiff {
    std::vector<DiffEntry> entries;  // ordered by next index, deletions after

    /// Entry for a statement of the previous / next program.
    const DiffEntry* for_prev(uint32_t idx) const;
    const DiffEntry* for_next(uint32_t idx) const;
};

constexpr double kUpdateThreshold = 0.35;

/// Depth-weighted fraction of equal nodes between two subtrees. Children are paired by
/// attribute key (positionally within a key); an equal pair at depth d contributes 1/(1+d).
/// Returns exactly 1.0 iff the trees are equal.
double statement_similarity(const AstArena& a, uint32_t root_a, const AstArena& b, uint32_t root_b);

/// Structural equality ignoring whitespace, comments and keyword case.
bool subtree_equal(const AstArena& a, uint32_t root_a, const AstArena& b, uint32_t root_b);

/// Patience-style statement mapping between two analyzed programs.
ScriptDiff diff_scripts(const ProgramDescription& prev, const ProgramDescription& next);

std::string format_diff(const ScriptDiff& diff, const ProgramDescription& prev, const ProgramDescription& next);

}  // namespace dashql
