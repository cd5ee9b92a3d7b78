#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "quadgen/error.hpp"
#include "quadgen/schema.hpp"

namespace quadgen {

/// k-ary prefix tree over labels. Nodes live in a flat vector; node 0 is the root
/// and carries no label. A terminal node marks a complete entry and may carry an
/// integer payload (e.g. the index of a sub-trie).
template <class Label>
class BasicTrie {
 public:
  using NodeId = std::size_t;
  static constexpr NodeId kRoot = 0;

  BasicTrie() : nodes_(1) {}

  /// Inserts a nonempty sequence. Re-inserting with a different payload throws.
  void insert(std::span<const Label> tokens, std::optional<std::size_t> payload = std::nullopt) {
    if (tokens.empty()) throw Error("trie insert: empty token sequence");
    NodeId cur = kRoot;
    for (const auto& t : tokens) {
      auto it = nodes_[cur].children.find(t);
      if (it == nodes_[cur].children.end()) {
        nodes_.push_back(Node{t, {}, false, std::nullopt});
        it = nodes_[cur].children.emplace(t, nodes_.size() - 1).first;
      }
      cur = it->second;
    }
    auto& n = nodes_[cur];
    if (n.terminal && payload && n.payload && *n.payload != *payload)
      throw Error("trie insert: conflicting payload for an existing entry");
    n.terminal = true;
    if (payload) n.payload = payload;
  }

  void insert(std::initializer_list<Label> tokens, std::optional<std::size_t> payload = std::nullopt) {
    std::vector<Label> v(tokens);
    insert(std::span<const Label>(v), payload);
  }

  /// Node reached by walking `prefix` from the root, if present.
  std::optional<NodeId> find(std::span<const Label> prefix, NodeId from = kRoot) const {
    NodeId cur = from;
    for (const auto& t : prefix) {
      auto next = step(cur, t);
      if (!next) return std::nullopt;
      cur = *next;
    }
    return cur;
  }

  std::optional<NodeId> step(NodeId node, const Label& t) const {
    const auto& ch = nodes_.at(node).children;
    auto it = ch.find(t);
    if (it == ch.end()) return std::nullopt;
    return it->second;
  }

  /// Labels of the children of the node reached by `prefix`; empty when absent.
  std::set<Label> children(std::span<const Label> prefix) const {
    auto n = find(prefix);
    return n ? children_of(*n) : std::set<Label>{};
  }

  std::set<Label> children_of(NodeId node) const {
    std::set<Label> out;
    for (const auto& [label, _] : nodes_.at(node).children) out.insert(label);
    return out;
  }

  const std::map<Label, NodeId>& child_map(NodeId node) const { return nodes_.at(node).children; }
  const Label& label(NodeId node) const { return nodes_.at(node).label; }
  bool terminal(NodeId node) const { return nodes_.at(node).terminal; }
  bool is_leaf(NodeId node) const { return nodes_.at(node).children.empty(); }
  std::optional<std::size_t> payload(NodeId node) const { return nodes_.at(node).payload; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  /// Every inserted sequence, in label order.
  std::vector<std::vector<Label>> entries() const {
    std::vector<std::vector<Label>> out;
    std::vector<Label> path;
    collect(kRoot, path, out);
    return out;
  }

 private:
  struct Node {
    Label label{};
    std::map<Label, NodeId> children;
    bool terminal = false;
    std::optional<std::size_t> payload;
  };

  void collect(NodeId n, std::vector<Label>& path, std::vector<std::vector<Label>>& out) const {
    if (nodes_[n].terminal) out.push_back(path);
    for (const auto& [label, child] : nodes_[n].children) {
      path.push_back(label);
      collect(child, path, out);
      path.pop_back();
    }
  }

  std::vector<Node> nodes_;
};

using Trie = BasicTrie<std::string>;

/// Two-level category trie: C1 entries whose terminal payload indexes the trie of
/// that category's subcategories.
struct CategoryTrie {
  Trie categories;
  std::vector<Trie> subcategories;

  const Trie& subtrie_at(Trie::NodeId c1_terminal) const {
    auto p = categories.payload(c1_terminal);
    if (!p) throw Error("category trie node has no subcategory payload");
    return subcategories.at(*p);
  }
};

inline CategoryTrie build_category_trie(const CategorySchema& schema) {
  CategoryTrie t;
  for (const auto& c1 : schema.categories()) {
    Trie sub;
    for (const auto& c2 : schema.subcategories(c1)) sub.insert(std::span<const std::string>(schema.symbol_tokens(c2)));
    t.subcategories.push_back(std::move(sub));
    t.categories.insert(std::span<const std::string>(schema.symbol_tokens(c1)), t.subcategories.size() - 1);
  }
  return t;
}

inline Trie build_sentiment_trie(const CategorySchema& schema) {
  Trie t;
  for (const auto& s : schema.sentiments()) t.insert(std::span<const std::string>(schema.symbol_tokens(s)));
  return t;
}

namespace detail {
inline void dump_node(std::ostream& os, const Trie& t, Trie::NodeId n, int depth,
                      const CategoryTrie* owner) {
  for (const auto& [label, child] : t.child_map(n)) {
    os << std::string(static_cast<std::size_t>(depth) * 2, ' ') << label << (t.terminal(child) ? " *" : "")
       << "\n";
    dump_node(os, t, child, depth + 1, owner);
    if (owner && t.terminal(child) && t.payload(child))
      dump_node(os, owner->subcategories.at(*t.payload(child)), Trie::kRoot, depth + 2, nullptr);
  }
}
}  // namespace detail

/// Indented dump; terminal nodes are marked with '*'.
inline void dump_trie(std::ostream& os, const Trie& t, int depth = 0) {
  detail::dump_node(os, t, Trie::kRoot, depth, nullptr);
}

/// Category trie dump; each C1 is followed by its subcategory trie, indented further.
inline void dump_trie(std::ostream& os, const CategoryTrie& t, int depth = 0) {
  detail::dump_node(os, t.categories, Trie::kRoot, depth, &t);
}

}  // namespace quadgen
