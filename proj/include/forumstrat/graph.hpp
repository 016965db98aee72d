#pragma once

// Typed forum graph (forums, boards, threads, members; post and interact
// edges) and population projection by selection rule.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "forumstrat/error.hpp"
#include "forumstrat/time.hpp"

namespace forumstrat {

inline constexpr int kGraphSchemaVersion = 1;

enum class NodeKind { Forum, Board, Thread, Member };

enum class PostType : std::uint8_t { Offer, Request, Exchange, Tutorial, Other };

inline std::string_view to_string(PostType t) {
  switch (t) {
    case PostType::Offer: return "Offer";
    case PostType::Request: return "Request";
    case PostType::Exchange: return "Exchange";
    case PostType::Tutorial: return "Tutorial";
    case PostType::Other: return "other";
  }
  return "other";
}

/// Case-insensitive; anything unrecognised becomes Other.
inline PostType parse_post_type(std::string_view s) {
  std::string low(s);
  for (auto& c : low) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (low == "offer") return PostType::Offer;
  if (low == "request") return PostType::Request;
  if (low == "exchange") return PostType::Exchange;
  if (low == "tutorial") return PostType::Tutorial;
  return PostType::Other;
}

/// One line of the ingestion format.
struct PostRecord {
  std::string forum;
  std::string board;
  std::string thread_id;
  std::string thread_title;
  std::string member_id;
  std::string post_id;
  std::string content;
  std::string post_type;
  Timestamp timestamp{};
};

struct Node {
  std::string id;
  NodeKind kind;
  std::string label;
};

struct ForumNode {
  std::string name;
};

struct BoardNode {
  std::string name;
  std::uint32_t forum;
};

struct ThreadNode {
  std::string id;
  std::string title;
  std::uint32_t board;
};

struct MemberNode {
  std::string id;
};

struct PostEdge {
  std::uint32_t member;
  std::uint32_t thread;
  std::string post_id;
  std::string content;
  PostType type;
  Timestamp timestamp;
};

struct InteractEdge {
  std::uint32_t member;
  std::uint32_t thread;
  std::uint32_t weight;

  friend bool operator==(const InteractEdge&, const InteractEdge&) = default;
};

class GraphBuilder;

/// Immutable forum graph. Built through GraphBuilder or ingest(); every
/// transformation returns a new value.
class ForumGraph {
 public:
  ForumGraph() = default;

  std::span<const ForumNode> forums() const { return forums_; }
  std::span<const BoardNode> boards() const { return boards_; }
  std::span<const ThreadNode> threads() const { return threads_; }
  std::span<const MemberNode> members() const { return members_; }
  std::span<const PostEdge> posts() const { return posts_; }
  /// Sorted by (member, thread).
  std::span<const InteractEdge> interactions() const { return interact_; }

  std::size_t node_count() const {
    return forums_.size() + boards_.size() + threads_.size() + members_.size();
  }

  std::string board_id(std::uint32_t b) const {
    return forums_[boards_[b].forum].name + "/" + boards_[b].name;
  }

  std::optional<std::uint32_t> find_member(std::string_view id) const {
    auto it = member_index_.find(std::string(id));
    if (it == member_index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<std::uint32_t> find_post(std::string_view post_id) const {
    auto it = post_index_.find(std::string(post_id));
    if (it == post_index_.end()) return std::nullopt;
    return it->second;
  }

  /// Every node as {id, kind, label}; forum, board, thread, member order.
  std::vector<Node> nodes() const {
    std::vector<Node> out;
    out.reserve(node_count());
    for (const auto& f : forums_) out.push_back({f.name, NodeKind::Forum, f.name});
    for (std::uint32_t b = 0; b < boards_.size(); ++b) {
      out.push_back({board_id(b), NodeKind::Board, boards_[b].name});
    }
    for (const auto& t : threads_) out.push_back({t.id, NodeKind::Thread, t.title});
    for (const auto& m : members_) out.push_back({m.id, NodeKind::Member, m.id});
    return out;
  }

  /// Record form of post p, suitable for re-ingestion.
  PostRecord record(std::uint32_t p) const {
    const auto& e = posts_[p];
    const auto& t = threads_[e.thread];
    const auto& b = boards_[t.board];
    return PostRecord{forums_[b.forum].name, b.name, t.id, t.title,
                      members_[e.member].id, e.post_id, e.content,
                      std::string(to_string(e.type)), e.timestamp};
  }

 private:
  friend class GraphBuilder;

  std::vector<ForumNode> forums_;
  std::vector<BoardNode> boards_;
  std::vector<ThreadNode> threads_;
  std::vector<MemberNode> members_;
  std::vector<PostEdge> posts_;
  std::vector<InteractEdge> interact_;
  std::unordered_map<std::string, std::uint32_t> member_index_;
  std::unordered_map<std::string, std::uint32_t> post_index_;
};

/// Single-writer accumulator for ForumGraph. Nodes are deduplicated by
/// source id (threads, members) or by name within the parent (forums,
/// boards). Node order is first appearance.
class GraphBuilder {
 public:
  std::uint32_t add_forum(const std::string& name) {
    auto [it, inserted] = forum_index_.try_emplace(name, g_.forums_.size());
    if (inserted) g_.forums_.push_back({name});
    return it->second;
  }

  std::uint32_t add_board(const std::string& forum, const std::string& board) {
    const auto f = add_forum(forum);
    auto [it, inserted] = board_index_.try_emplace(forum + '\x1f' + board, g_.boards_.size());
    if (inserted) g_.boards_.push_back({board, f});
    return it->second;
  }

  std::uint32_t add_thread(const std::string& forum, const std::string& board,
                           const std::string& thread_id, const std::string& title) {
    const auto b = add_board(forum, board);
    auto [it, inserted] = thread_index_.try_emplace(thread_id, g_.threads_.size());
    if (inserted) {
      g_.threads_.push_back({thread_id, title, b});
    } else if (g_.threads_[it->second].board != b) {
      throw DataError("thread '" + thread_id + "' already belongs to board '" +
                      g_.board_id(g_.threads_[it->second].board) + "', not '" +
                      forum + "/" + board + "'");
    }
    return it->second;
  }

  std::uint32_t add_member(const std::string& member_id) {
    auto [it, inserted] = g_.member_index_.try_emplace(member_id, g_.members_.size());
    if (inserted) g_.members_.push_back({member_id});
    return it->second;
  }

  void add_post(const PostRecord& r) {
    if (r.post_id.empty()) throw DataError("empty post_id");
    if (g_.post_index_.contains(r.post_id)) {
      throw DataError("duplicate post_id '" + r.post_id + "'");
    }
    const auto t = add_thread(r.forum, r.board, r.thread_id, r.thread_title);
    const auto m = add_member(r.member_id);
    g_.post_index_.emplace(r.post_id, static_cast<std::uint32_t>(g_.posts_.size()));
    g_.posts_.push_back({m, t, r.post_id, r.content, parse_post_type(r.post_type), r.timestamp});
  }

  /// Finalizes: derives interact edges from the post edges.
  ForumGraph build() && {
    derive_interactions(g_);
    return std::move(g_);
  }

  static void derive_interactions(ForumGraph& g) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    pairs.reserve(g.posts_.size());
    for (const auto& p : g.posts_) pairs.emplace_back(p.member, p.thread);
    std::sort(pairs.begin(), pairs.end());
    g.interact_.clear();
    for (std::size_t i = 0; i < pairs.size();) {
      std::size_t j = i;
      while (j < pairs.size() && pairs[j] == pairs[i]) ++j;
      g.interact_.push_back({pairs[i].first, pairs[i].second, static_cast<std::uint32_t>(j - i)});
      i = j;
    }
  }

 private:
  ForumGraph g_;
  std::unordered_map<std::string, std::uint32_t> forum_index_;
  std::unordered_map<std::string, std::uint32_t> board_index_;
  std::unordered_map<std::string, std::uint32_t> thread_index_;
};

/// Recomputes interact edges as per-(member, thread) post counts. Idempotent.
inline ForumGraph build_interact(ForumGraph g) {
  GraphBuilder::derive_interactions(g);
  return g;
}

// ---------------------------------------------------------------------------
// Ingestion

struct IngestOptions {
  /// Skip malformed lines (collecting their errors) instead of aborting.
  /// Duplicate post ids always abort.
  bool skip_malformed = false;
};

struct IngestResult {
  ForumGraph graph;
  std::vector<IngestError> skipped;
};

inline PostRecord parse_record(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("record is not a JSON object");
  auto field = [&](const char* name) -> std::string {
    auto it = j.find(name);
    if (it == j.end()) throw DataError(std::string("missing field '") + name + "'");
    if (!it->is_string()) throw DataError(std::string("field '") + name + "' is not a string");
    return it->get<std::string>();
  };
  PostRecord r;
  r.forum = field("forum");
  r.board = field("board");
  r.thread_id = field("thread_id");
  r.thread_title = field("thread_title");
  r.member_id = field("member_id");
  r.post_id = field("post_id");
  r.content = field("content");
  r.post_type = field("post_type");
  const auto ts = field("timestamp");
  auto parsed = parse_rfc3339(ts);
  if (!parsed) throw DataError("invalid RFC 3339 timestamp '" + ts + "'");
  r.timestamp = *parsed;
  if (r.thread_id.empty()) throw DataError("empty thread_id");
  if (r.member_id.empty()) throw DataError("empty member_id");
  return r;
}

inline nlohmann::json record_to_json(const PostRecord& r) {
  return nlohmann::json{{"forum", r.forum},           {"board", r.board},
                        {"thread_id", r.thread_id},   {"thread_title", r.thread_title},
                        {"member_id", r.member_id},   {"post_id", r.post_id},
                        {"content", r.content},       {"post_type", r.post_type},
                        {"timestamp", format_rfc3339(r.timestamp)}};
}

inline void write_jsonl(std::ostream& out, std::span<const PostRecord> records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

/// Reads JSON-lines post records. Blank lines are ignored.
inline IngestResult ingest(std::istream& in, const IngestOptions& opts = {}) {
  GraphBuilder builder;
  IngestResult result;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    PostRecord r;
    try {
      r = parse_record(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      if (!opts.skip_malformed) throw IngestError(lineno, std::string("malformed JSON: ") + e.what());
      result.skipped.emplace_back(lineno, std::string("malformed JSON: ") + e.what());
      continue;
    } catch (const DataError& e) {
      if (!opts.skip_malformed) throw IngestError(lineno, e.what());
      result.skipped.emplace_back(lineno, e.what());
      continue;
    }
    try {
      builder.add_post(r);
    } catch (const DataError& e) {
      throw IngestError(lineno, e.what());
    }
  }
  result.graph = std::move(builder).build();
  return result;
}

inline ForumGraph ingest_records(std::span<const PostRecord> records) {
  GraphBuilder builder;
  for (const auto& r : records) builder.add_post(r);
  return std::move(builder).build();
}

/// Removes a member and every incident post/interact edge. Threads, boards
/// and forums are kept.
inline ForumGraph exclude_member(const ForumGraph& g, std::string_view member_id) {
  const auto victim = g.find_member(member_id);
  if (!victim) throw NotFoundError("unknown member '" + std::string(member_id) + "'");
  GraphBuilder b;
  for (const auto& f : g.forums()) b.add_forum(f.name);
  for (const auto& bd : g.boards()) b.add_board(g.forums()[bd.forum].name, bd.name);
  for (const auto& t : g.threads()) {
    const auto& bd = g.boards()[t.board];
    b.add_thread(g.forums()[bd.forum].name, bd.name, t.id, t.title);
  }
  for (std::uint32_t m = 0; m < g.members().size(); ++m) {
    if (m != *victim) b.add_member(g.members()[m].id);
  }
  for (std::uint32_t p = 0; p < g.posts().size(); ++p) {
    if (g.posts()[p].member != *victim) b.add_post(g.record(p));
  }
  return std::move(b).build();
}

// ---------------------------------------------------------------------------
// Population projection

struct SelectionRule {
  /// Empty means every type. A non-empty filter never admits PostType::Other.
  std::set<PostType> post_types;
  /// Matched against the board name or the "forum/board" id.
  std::optional<std::set<std::string>> boards;
  /// Posts with timestamp strictly after the cutoff are dropped.
  std::optional<Timestamp> cutoff;
  std::set<std::string> excluded_members;

  bool is_identity() const {
    return post_types.empty() && !boards && !cutoff && excluded_members.empty();
  }

  friend bool operator==(const SelectionRule&, const SelectionRule&) = default;
};

inline nlohmann::json rule_to_json(const SelectionRule& r) {
  nlohmann::json j;
  j["post_types"] = nlohmann::json::array();
  for (auto t : r.post_types) j["post_types"].push_back(std::string(to_string(t)));
  j["boards"] = r.boards ? nlohmann::json(*r.boards) : nlohmann::json(nullptr);
  j["cutoff"] = r.cutoff ? nlohmann::json(format_rfc3339(*r.cutoff)) : nlohmann::json(nullptr);
  j["exclude_members"] = r.excluded_members;
  return j;
}

inline SelectionRule rule_from_json(const nlohmann::json& j) {
  SelectionRule r;
  if (j.contains("post_types")) {
    for (const auto& s : j.at("post_types")) {
      const auto t = parse_post_type(s.get<std::string>());
      if (t == PostType::Other) {
        throw ValidationError("unknown post type in rule: '" + s.get<std::string>() + "'");
      }
      r.post_types.insert(t);
    }
  }
  if (j.contains("boards") && !j.at("boards").is_null()) {
    r.boards = j.at("boards").get<std::set<std::string>>();
  }
  if (j.contains("cutoff") && !j.at("cutoff").is_null()) {
    const auto s = j.at("cutoff").get<std::string>();
    auto ts = parse_rfc3339(s);
    if (!ts) throw ValidationError("invalid cutoff timestamp '" + s + "'");
    r.cutoff = *ts;
  }
  if (j.contains("exclude_members")) {
    r.excluded_members = j.at("exclude_members").get<std::set<std::string>>();
  }
  return r;
}

/// Projected member x thread bipartite subgraph. Rows are members, columns
/// threads, both densely reindexed in base-graph order. A is the CSR
/// sparsity pattern; W holds per-cell post counts.
class PopulationGraph {
 public:
  PopulationGraph() = default;

  const ForumGraph& base() const { return *base_; }
  std::shared_ptr<const ForumGraph> base_ptr() const { return base_; }
  const SelectionRule& rule() const { return rule_; }

  std::size_t member_count() const { return members_.size(); }
  std::size_t thread_count() const { return threads_.size(); }
  std::size_t post_count() const { return posts_.size(); }
  std::size_t interact_count() const { return cols_.size(); }
  bool empty() const { return posts_.empty(); }

  std::uint32_t member_base_index(std::size_t row) const { return members_[row]; }
  std::uint32_t thread_base_index(std::size_t col) const { return threads_[col]; }
  const std::string& member_id(std::size_t row) const { return base_->members()[members_[row]].id; }
  const std::string& thread_id(std::size_t col) const { return base_->threads()[threads_[col]].id; }

  /// Retained post i (population order = base order).
  const PostEdge& post(std::size_t i) const { return base_->posts()[posts_[i]]; }
  std::uint32_t post_base_index(std::size_t i) const { return posts_[i]; }
  std::uint32_t post_row(std::size_t i) const { return post_row_[i]; }
  std::uint32_t post_col(std::size_t i) const { return post_col_[i]; }

  std::span<const std::uint32_t> row_threads(std::size_t row) const {
    return {cols_.data() + row_ptr_[row], cols_.data() + row_ptr_[row + 1]};
  }
  std::span<const std::uint32_t> row_weights(std::size_t row) const {
    return {weights_.data() + row_ptr_[row], weights_.data() + row_ptr_[row + 1]};
  }

  /// A[i][j] in {0, 1}.
  int adjacency(std::size_t row, std::size_t col) const { return weight(row, col) > 0 ? 1 : 0; }

  /// W[i][j]; 0 where A is 0.
  std::uint32_t weight(std::size_t row, std::size_t col) const {
    const auto cols = row_threads(row);
    auto it = std::lower_bound(cols.begin(), cols.end(), static_cast<std::uint32_t>(col));
    if (it == cols.end() || *it != col) return 0;
    return row_weights(row)[static_cast<std::size_t>(it - cols.begin())];
  }

  /// Materializes the population as a standalone graph (retained posts,
  /// their members/threads, and the boards/forums they hang from).
  ForumGraph as_graph() const {
    GraphBuilder b;
    for (auto t : threads_) {
      const auto& th = base_->threads()[t];
      const auto& bd = base_->boards()[th.board];
      b.add_thread(base_->forums()[bd.forum].name, bd.name, th.id, th.title);
    }
    for (auto m : members_) b.add_member(base_->members()[m].id);
    for (auto p : posts_) b.add_post(base_->record(p));
    return std::move(b).build();
  }

  friend PopulationGraph project(std::shared_ptr<const ForumGraph> graph, SelectionRule rule);

 private:
  std::shared_ptr<const ForumGraph> base_;
  SelectionRule rule_;
  std::vector<std::uint32_t> members_;
  std::vector<std::uint32_t> threads_;
  std::vector<std::uint32_t> posts_;
  std::vector<std::uint32_t> post_row_;
  std::vector<std::uint32_t> post_col_;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::uint32_t> cols_;
  std::vector<std::uint32_t> weights_;
};

inline bool rule_admits(const ForumGraph& g, const SelectionRule& rule, const PostEdge& p) {
  if (!rule.post_types.empty() &&
      (p.type == PostType::Other || !rule.post_types.contains(p.type))) {
    return false;
  }
  if (rule.cutoff && p.timestamp > *rule.cutoff) return false;
  if (rule.boards) {
    const auto b = g.threads()[p.thread].board;
    if (!rule.boards->contains(g.boards()[b].name) && !rule.boards->contains(g.board_id(b))) {
      return false;
    }
  }
  if (!rule.excluded_members.empty() &&
      rule.excluded_members.contains(g.members()[p.member].id)) {
    return false;
  }
  return true;
}

/// Keeps posts admitted by the rule; drops members/threads left without
/// posts and rebuilds A and W from the retained subset.
inline PopulationGraph project(std::shared_ptr<const ForumGraph> graph, SelectionRule rule) {
  if (!graph) throw ValidationError("project: null graph");
  const auto& g = *graph;
  PopulationGraph pop;
  constexpr auto kNone = UINT32_MAX;
  std::vector<std::uint32_t> member_row(g.members().size(), kNone);
  std::vector<std::uint32_t> thread_col(g.threads().size(), kNone);

  for (std::uint32_t p = 0; p < g.posts().size(); ++p) {
    const auto& e = g.posts()[p];
    if (!rule_admits(g, rule, e)) continue;
    pop.posts_.push_back(p);
    member_row[e.member] = 0;
    thread_col[e.thread] = 0;
  }
  if (pop.posts_.empty()) throw DataError("selection rule matches zero posts (empty population)");

  for (std::uint32_t m = 0; m < member_row.size(); ++m) {
    if (member_row[m] != kNone) {
      member_row[m] = static_cast<std::uint32_t>(pop.members_.size());
      pop.members_.push_back(m);
    }
  }
  for (std::uint32_t t = 0; t < thread_col.size(); ++t) {
    if (thread_col[t] != kNone) {
      thread_col[t] = static_cast<std::uint32_t>(pop.threads_.size());
      pop.threads_.push_back(t);
    }
  }

  std::vector<std::pair<std::uint32_t, std::uint32_t>> cells;
  cells.reserve(pop.posts_.size());
  pop.post_row_.reserve(pop.posts_.size());
  pop.post_col_.reserve(pop.posts_.size());
  for (auto p : pop.posts_) {
    const auto& e = g.posts()[p];
    pop.post_row_.push_back(member_row[e.member]);
    pop.post_col_.push_back(thread_col[e.thread]);
    cells.emplace_back(member_row[e.member], thread_col[e.thread]);
  }
  std::sort(cells.begin(), cells.end());

  pop.row_ptr_.assign(pop.members_.size() + 1, 0);
  for (std::size_t i = 0; i < cells.size();) {
    std::size_t j = i;
    while (j < cells.size() && cells[j] == cells[i]) ++j;
    pop.cols_.push_back(cells[i].second);
    pop.weights_.push_back(static_cast<std::uint32_t>(j - i));
    ++pop.row_ptr_[cells[i].first + 1];
    i = j;
  }
  for (std::size_t r = 0; r < pop.members_.size(); ++r) pop.row_ptr_[r + 1] += pop.row_ptr_[r];

  pop.base_ = std::move(graph);
  pop.rule_ = std::move(rule);
  return pop;
}

inline PopulationGraph project(ForumGraph graph, SelectionRule rule) {
  return project(std::make_shared<const ForumGraph>(std::move(graph)), std::move(rule));
}

// ---------------------------------------------------------------------------
// Snapshots and statistics

inline nlohmann::json graph_to_json(const ForumGraph& g,
                                    const std::optional<SelectionRule>& rule = std::nullopt) {
  using nlohmann::json;
  json j;
  j["schema_version"] = kGraphSchemaVersion;
  j["forums"] = json::array();
  for (const auto& f : g.forums()) j["forums"].push_back(f.name);
  j["boards"] = json::array();
  for (const auto& b : g.boards()) j["boards"].push_back({{"name", b.name}, {"forum", b.forum}});
  j["threads"] = json::array();
  for (const auto& t : g.threads()) {
    j["threads"].push_back({{"id", t.id}, {"title", t.title}, {"board", t.board}});
  }
  j["members"] = json::array();
  for (const auto& m : g.members()) j["members"].push_back(m.id);
  j["posts"] = json::array();
  for (const auto& p : g.posts()) {
    j["posts"].push_back({{"member", p.member},
                          {"thread", p.thread},
                          {"post_id", p.post_id},
                          {"content", p.content},
                          {"post_type", std::string(to_string(p.type))},
                          {"timestamp", format_rfc3339(p.timestamp)}});
  }
  j["interact"] = json::array();
  for (const auto& e : g.interactions()) {
    j["interact"].push_back({e.member, e.thread, e.weight});
  }
  if (rule) j["rule"] = rule_to_json(*rule);
  return j;
}

struct GraphSnapshot {
  ForumGraph graph;
  std::optional<SelectionRule> rule;
};

inline GraphSnapshot graph_from_json(const nlohmann::json& j) {
  if (!j.contains("schema_version") || j.at("schema_version") != kGraphSchemaVersion) {
    throw DataError("graph snapshot: unsupported or missing schema_version");
  }
  try {
    GraphBuilder b;
    std::vector<std::string> forums = j.at("forums").get<std::vector<std::string>>();
    for (const auto& f : forums) b.add_forum(f);
    struct B { std::string name; std::uint32_t forum; };
    std::vector<B> boards;
    for (const auto& bj : j.at("boards")) {
      boards.push_back({bj.at("name").get<std::string>(), bj.at("forum").get<std::uint32_t>()});
      b.add_board(forums.at(boards.back().forum), boards.back().name);
    }
    for (const auto& tj : j.at("threads")) {
      const auto& bd = boards.at(tj.at("board").get<std::uint32_t>());
      b.add_thread(forums.at(bd.forum), bd.name, tj.at("id").get<std::string>(),
                   tj.at("title").get<std::string>());
    }
    const auto members = j.at("members").get<std::vector<std::string>>();
    for (const auto& m : members) b.add_member(m);
    const auto& threads = j.at("threads");
    for (const auto& pj : j.at("posts")) {
      PostRecord r;
      const auto& tj = threads.at(pj.at("thread").get<std::size_t>());
      const auto& bd = boards.at(tj.at("board").get<std::uint32_t>());
      r.forum = forums.at(bd.forum);
      r.board = bd.name;
      r.thread_id = tj.at("id").get<std::string>();
      r.thread_title = tj.at("title").get<std::string>();
      r.member_id = members.at(pj.at("member").get<std::size_t>());
      r.post_id = pj.at("post_id").get<std::string>();
      r.content = pj.at("content").get<std::string>();
      r.post_type = pj.at("post_type").get<std::string>();
      auto ts = parse_rfc3339(pj.at("timestamp").get<std::string>());
      if (!ts) throw DataError("graph snapshot: bad timestamp for post '" + r.post_id + "'");
      r.timestamp = *ts;
      b.add_post(r);
    }
    GraphSnapshot snap{std::move(b).build(), std::nullopt};
    if (j.contains("rule") && !j.at("rule").is_null()) snap.rule = rule_from_json(j.at("rule"));
    return snap;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("graph snapshot: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw DataError(std::string("graph snapshot: dangling index: ") + e.what());
  }
}

struct GraphStats {
  std::size_t forums = 0, boards = 0, threads = 0, members = 0;
  std::size_t posts = 0, interacts = 0;
};

inline GraphStats stats(const ForumGraph& g) {
  return {g.forums().size(), g.boards().size(), g.threads().size(),
          g.members().size(), g.posts().size(),  g.interactions().size()};
}

inline GraphStats stats(const PopulationGraph& p) {
  std::set<std::uint32_t> boards, forums;
  for (std::size_t c = 0; c < p.thread_count(); ++c) {
    const auto b = p.base().threads()[p.thread_base_index(c)].board;
    boards.insert(b);
    forums.insert(p.base().boards()[b].forum);
  }
  return {forums.size(), boards.size(), p.thread_count(), p.member_count(), p.post_count(),
          p.interact_count()};
}

inline std::string describe(const SelectionRule& r) {
  if (r.is_identity()) return "All posts";
  std::string s;
  auto sep = [&] { if (!s.empty()) s += "; "; };
  if (!r.post_types.empty()) {
    s += "post_type in {";
    bool first = true;
    for (auto t : r.post_types) {
      if (!first) s += ",";
      s += to_string(t);
      first = false;
    }
    s += "}";
  }
  if (r.boards) {
    sep();
    s += "boards: " + std::to_string(r.boards->size());
  }
  if (r.cutoff) {
    sep();
    s += "up to " + format_rfc3339(*r.cutoff);
  }
  if (!r.excluded_members.empty()) {
    sep();
    s += "excluding " + std::to_string(r.excluded_members.size()) + " member(s)";
  }
  return s;
}

/// Selection Rule | # Nodes | # Edges, one row.
inline void print_stats_table(std::ostream& out, const std::string& rule, const GraphStats& s) {
  const std::string nodes =
      std::to_string(s.members) + " (member), " + std::to_string(s.threads) + " (thread)";
  const std::string edges =
      std::to_string(s.posts) + " (post), " + std::to_string(s.interacts) + " (interact)";
  const std::size_t w0 = std::max<std::size_t>(rule.size(), 14);
  const std::size_t w1 = std::max<std::size_t>(nodes.size(), 7);
  auto pad = [](const std::string& v, std::size_t w) { return v + std::string(w - v.size(), ' '); };
  out << pad("Selection Rule", w0) << "  " << pad("# Nodes", w1) << "  # Edges\n";
  out << pad(rule, w0) << "  " << pad(nodes, w1) << "  " << edges << '\n';
}

}  // namespace forumstrat
