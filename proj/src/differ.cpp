#include "dashql/differ.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

namespace dashql {

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::EQUAL: return "EQUAL";
        case Verdict::UPDATED: return "UPDATED";
        case Verdict::NEW: return "NEW";
        case Verdict::DELETED: return "DELETED";
    }
    return "?";
}

const DiffEntry* ScriptDiff::for_prev(uint32_t idx) const {
    for (const auto& e : entries) {
        if (e.prev == idx) return &e;
    }
    return nullptr;
}

const DiffEntry* ScriptDiff::for_next(uint32_t idx) const {
    for (const auto& e : entries) {
        if (e.next == idx) return &e;
    }
    return nullptr;
}

namespace {

/// Type, key and (for leaves) value equality of two single nodes.
bool node_equal(const AstArena& a, uint32_t ia, const AstArena& b, uint32_t ib) {
    const AstNode& na = a.node(ia);
    const AstNode& nb = b.node(ib);
    if (na.node_type != nb.node_type || na.key() != nb.key()) return false;
    switch (na.node_type) {
        case NodeType::NAME: return a.name_value(ia) == b.name_value(ib);
        case NodeType::STRING: return a.string_value(ia) == b.string_value(ib);
        case NodeType::INTEGER:
        case NodeType::BOOL:
        case NodeType::ENUM: return a.int_value(ia) == b.int_value(ib);
        case NodeType::FLOAT: return a.double_value(ia) == b.double_value(ib);
        default: return true;
    }
}

double total_weight(const AstArena& a, uint32_t idx, uint32_t depth) {
    double w = 1.0 / (1.0 + depth);
    const AstNode& n = a.node(idx);
    for (uint32_t i = 0; i < n.children_count(); ++i) w += total_weight(a, n.children_begin() + i, depth + 1);
    return w;
}

double matched_weight(const AstArena& a, uint32_t ia, const AstArena& b, uint32_t ib, uint32_t depth) {
    if (!node_equal(a, ia, b, ib)) return 0.0;
    double w = 1.0 / (1.0 + depth);
    auto ca = a.children(ia);
    auto cb = b.children(ib);
    uint32_t base_a = a.node(ia).children_begin(), base_b = b.node(ib).children_begin();
    // children are sorted by key: walk both spans, pairing positionally within each key
    size_t i = 0, j = 0;
    while (i < ca.size() && j < cb.size()) {
        AttrKey ka = ca[i].key(), kb = cb[j].key();
        if (ka < kb) {
            ++i;
        } else if (kb < ka) {
            ++j;
        } else {
            w += matched_weight(a, base_a + static_cast<uint32_t>(i), b, base_b + static_cast<uint32_t>(j), depth + 1);
            ++i;
            ++j;
        }
    }
    return w;
}

uint64_t mix(uint64_t h, uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
}

uint64_t structural_hash(const AstArena& a, uint32_t idx) {
    const AstNode& n = a.node(idx);
    uint64_t h = mix(static_cast<uint64_t>(n.node_type), static_cast<uint64_t>(n.key()));
    switch (n.node_type) {
        case NodeType::NAME: h = mix(h, std::hash<std::string>{}(a.name_value(idx))); break;
        case NodeType::STRING: h = mix(h, std::hash<std::string>{}(a.string_value(idx))); break;
        case NodeType::INTEGER:
        case NodeType::BOOL:
        case NodeType::ENUM: h = mix(h, static_cast<uint64_t>(a.int_value(idx))); break;
        case NodeType::FLOAT: h = mix(h, std::hash<double>{}(a.double_value(idx))); break;
        default: break;
    }
    for (uint32_t i = 0; i < n.children_count(); ++i) h = mix(h, structural_hash(a, n.children_begin() + i));
    return h;
}

}  // namespace

bool subtree_equal(const AstArena& a, uint32_t ia, const AstArena& b, uint32_t ib) {
    if (!node_equal(a, ia, b, ib)) return false;
    const AstNode& na = a.node(ia);
    const AstNode& nb = b.node(ib);
    if (na.children_count() != nb.children_count()) return false;
    for (uint32_t i = 0; i < na.children_count(); ++i) {
        if (!subtree_equal(a, na.children_begin() + i, b, nb.children_begin() + i)) return false;
    }
    return true;
}

double statement_similarity(const AstArena& a, uint32_t root_a, const AstArena& b, uint32_t root_b) {
    if (subtree_equal(a, root_a, b, root_b)) return 1.0;
    double matched = matched_weight(a, root_a, b, root_b, 0);
    double total = std::max(total_weight(a, root_a, 0), total_weight(b, root_b, 0));
    double score = total > 0 ? matched / total : 0.0;
    return std::min(score, std::nextafter(1.0, 0.0));
}

ScriptDiff diff_scripts(const ProgramDescription& prev, const ProgramDescription& next) {
    const AstArena& pa = prev.ast();
    const AstArena& na = next.ast();
    const size_t np = prev.statements.size(), nn = next.statements.size();
    std::vector<std::optional<uint32_t>> prev_to_next(np), next_to_prev(nn);
    std::vector<double> prev_score(np, 0.0);

    // (1) unique exact matches of the same kind
    std::map<std::pair<uint64_t, int>, std::vector<uint32_t>> prev_groups, next_groups;
    for (uint32_t i = 0; i < np; ++i) {
        prev_groups[{structural_hash(pa, prev.statements[i].root), static_cast<int>(prev.statements[i].kind)}].push_back(i);
    }
    for (uint32_t j = 0; j < nn; ++j) {
        next_groups[{structural_hash(na, next.statements[j].root), static_cast<int>(next.statements[j].kind)}].push_back(j);
    }
    std::vector<std::pair<uint32_t, uint32_t>> unique;
    for (auto& [key, ps] : prev_groups) {
        auto it = next_groups.find(key);
        if (ps.size() != 1 || it == next_groups.end() || it->second.size() != 1) continue;
        uint32_t i = ps[0], j = it->second[0];
        if (!subtree_equal(pa, prev.statements[i].root, na, next.statements[j].root)) continue;
        unique.emplace_back(i, j);
    }
    std::sort(unique.begin(), unique.end());
    for (auto [i, j] : unique) {
        prev_to_next[i] = j;
        next_to_prev[j] = i;
        prev_score[i] = 1.0;
    }

    // (2) anchors: matches that lie on every longest increasing chain. Using the intersection
    // of all such chains keeps the anchor set independent of which side is called prev.
    std::vector<std::pair<uint32_t, uint32_t>> anchors;
    {
        const size_t k = unique.size();
        std::vector<size_t> lead(k, 1), tail(k, 1);
        for (size_t x = 0; x < k; ++x) {
            for (size_t y = 0; y < x; ++y) {
                if (unique[y].second < unique[x].second) lead[x] = std::max(lead[x], lead[y] + 1);
            }
        }
        for (size_t x = k; x-- > 0;) {
            for (size_t y = x + 1; y < k; ++y) {
                if (unique[x].second < unique[y].second) tail[x] = std::max(tail[x], tail[y] + 1);
            }
        }
        size_t best = 0;
        for (size_t x = 0; x < k; ++x) best = std::max(best, lead[x] + tail[x] - 1);
        std::map<size_t, std::vector<size_t>> on_chain;  // level -> matches on some longest chain
        for (size_t x = 0; x < k; ++x) {
            if (lead[x] + tail[x] - 1 == best) on_chain[lead[x]].push_back(x);
        }
        for (const auto& [level, xs] : on_chain) {
            if (xs.size() == 1) anchors.push_back(unique[xs[0]]);
        }
    }

    // (3) similarity matching between consecutive anchors, best pair first; ties prefer
    // pairs closer in script position
    anchors.insert(anchors.begin(), {UINT32_MAX, UINT32_MAX});
    anchors.push_back({static_cast<uint32_t>(np), static_cast<uint32_t>(nn)});
    for (size_t r = 0; r + 1 < anchors.size(); ++r) {
        uint32_t p_lo = anchors[r].first == UINT32_MAX ? 0 : anchors[r].first + 1;
        uint32_t n_lo = anchors[r].second == UINT32_MAX ? 0 : anchors[r].second + 1;
        uint32_t p_hi = anchors[r + 1].first, n_hi = anchors[r + 1].second;
        struct Candidate {
            double score;
            uint32_t i, j;
        };
        std::vector<Candidate> cands;
        for (uint32_t i = p_lo; i < p_hi; ++i) {
            if (prev_to_next[i]) continue;
            for (uint32_t j = n_lo; j < n_hi; ++j) {
                if (next_to_prev[j] || next.statements[j].kind != prev.statements[i].kind) continue;
                double s = statement_similarity(pa, prev.statements[i].root, na, next.statements[j].root);
                if (s >= kUpdateThreshold) cands.push_back({s, i, j});
            }
        }
        auto dist = [](const Candidate& c) { return c.i > c.j ? c.i - c.j : c.j - c.i; };
        std::sort(cands.begin(), cands.end(), [&](const Candidate& x, const Candidate& y) {
            if (x.score != y.score) return x.score > y.score;
            if (dist(x) != dist(y)) return dist(x) < dist(y);
            return x.i + x.j < y.i + y.j;
        });
        for (const auto& c : cands) {
            if (prev_to_next[c.i] || next_to_prev[c.j]) continue;
            prev_to_next[c.i] = c.j;
            next_to_prev[c.j] = c.i;
            prev_score[c.i] = c.score;
        }
    }

    // (4) emit
    ScriptDiff diff;
    for (uint32_t j = 0; j < nn; ++j) {
        DiffEntry e;
        e.next = j;
        if (auto i = next_to_prev[j]) {
            e.prev = *i;
            e.similarity = prev_score[*i];
            e.verdict = e.similarity == 1.0 ? Verdict::EQUAL : Verdict::UPDATED;
        } else {
            e.verdict = Verdict::NEW;
        }
        diff.entries.push_back(e);
    }
    for (uint32_t i = 0; i < np; ++i) {
        if (prev_to_next[i]) continue;
        DiffEntry e;
        e.prev = i;
        e.verdict = Verdict::DELETED;
        diff.entries.push_back(e);
    }
    return diff;
}

std::string format_diff(const ScriptDiff& diff, const ProgramDescription& prev, const ProgramDescription& next) {
    std::string out = fmt::format("{:<6} {:<6} {:<8} {:>10}  {}\n", "prev", "next", "verdict", "similarity", "statement");
    for (const auto& e : diff.entries) {
        auto idx = [](std::optional<uint32_t> v) { return v ? std::to_string(*v) : std::string("-"); };
        const ProgramDescription& src = e.next ? next : prev;
        uint32_t s = e.next ? *e.next : *e.prev;
        auto text = std::string(src.ast().text().substr(src.statements[s].loc.offset, src.statements[s].loc.length));
        std::replace(text.begin(), text.end(), '\n', ' ');
        if (text.size() > 60) text = text.substr(0, 57) + "...";
        out += fmt::format("{:<6} {:<6} {:<8} {:>10.4f}  {}\n", idx(e.prev), idx(e.next), to_string(e.verdict), e.similarity, text);
    }
    return out;
}

}  // namespace dashql
