#pragma once

// Human annotation of a stratified sample: per-annotator labels kept in an
// append-only journal with periodic snapshots, live inter-annotator
// agreement, a joint resolution phase, and CSV export.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "forumstrat/csv.hpp"
#include "forumstrat/error.hpp"
#include "forumstrat/graph.hpp"
#include "forumstrat/scheme.hpp"
#include "forumstrat/stats.hpp"
#include "forumstrat/time.hpp"

namespace forumstrat {

/// Request conflicts with the sample's workflow phase.
class PhaseError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Fewer than two annotators share a fully labeled post.
class InsufficientOverlap : public ValidationError {
 public:
  InsufficientOverlap() : ValidationError("insufficient overlap") {}
  explicit InsufficientOverlap(const std::string& detail) : ValidationError("insufficient overlap: " + detail) {}
};

struct AnnotationPost {
  std::string post_id;
  std::string content;
  std::string thread_title;
  std::string board;
};

/// Posts in serving order.
struct AnnotationSample {
  std::string id;
  std::vector<AnnotationPost> posts;
};

inline AnnotationSample make_annotation_sample(const ForumGraph& g, std::string id,
                                               std::span<const std::string> post_ids) {
  AnnotationSample s;
  s.id = std::move(id);
  std::set<std::string> seen;
  for (const auto& pid : post_ids) {
    if (!seen.insert(pid).second) throw DataError("annotation sample lists post '" + pid + "' twice");
    auto p = g.find_post(pid);
    if (!p) throw DataError("annotation sample post '" + pid + "' is not in the graph");
    const auto& e = g.posts()[*p];
    const auto& t = g.threads()[e.thread];
    s.posts.push_back({pid, e.content, t.title, g.boards()[t.board].name});
  }
  return s;
}

inline nlohmann::json to_json(const AnnotationSample& s) {
  nlohmann::json posts = nlohmann::json::array();
  for (const auto& p : s.posts) {
    posts.push_back({{"post_id", p.post_id}, {"content", p.content}, {"thread_title", p.thread_title}, {"board", p.board}});
  }
  return {{"sample_id", s.id}, {"posts", posts}};
}

inline AnnotationSample annotation_sample_from_json(const nlohmann::json& j) {
  try {
    AnnotationSample s;
    s.id = j.at("sample_id").get<std::string>();
    std::set<std::string> seen;
    for (const auto& p : j.at("posts")) {
      AnnotationPost a{p.at("post_id").get<std::string>(), p.value("content", std::string{}),
                       p.value("thread_title", std::string{}), p.value("board", std::string{})};
      if (!seen.insert(a.post_id).second) throw DataError("annotation sample lists post '" + a.post_id + "' twice");
      s.posts.push_back(std::move(a));
    }
    if (s.id.empty()) throw DataError("annotation sample has an empty id");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("annotation sample: ") + e.what());
  }
}

enum class Phase { Annotation, Resolution };

inline std::string_view to_string(Phase p) { return p == Phase::Annotation ? "annotation" : "resolution"; }

inline Phase parse_phase(std::string_view s) {
  if (s == "annotation") return Phase::Annotation;
  if (s == "resolution") return Phase::Resolution;
  throw ValidationError("unknown phase '" + std::string(s) + "'");
}

struct Label {
  std::string class_id;
  Timestamp at{};
};

/// Overwrites of an existing label; the journal keeps the full history too.
struct AuditEntry {
  std::uint64_t seq = 0;
  std::string post_id;
  std::string annotator;
  std::string previous;
  std::string current;
  Timestamp at{};
};

enum class SubmitStatus { Created, Updated, Unchanged };

inline std::string_view to_string(SubmitStatus s) {
  switch (s) {
    case SubmitStatus::Created: return "created";
    case SubmitStatus::Updated: return "updated";
    case SubmitStatus::Unchanged: return "unchanged";
  }
  return "created";
}

using Clock = std::function<Timestamp()>;

inline Timestamp system_now() {
  return std::chrono::time_point_cast<std::chrono::microseconds>(std::chrono::system_clock::now());
}

/// Label state of one sample, durable in `dir` as <id>.journal.jsonl (one
/// JSON object per operation, written and fsync'd before the in-memory state
/// changes) and <id>.snapshot.json (state up to a journal sequence number,
/// replaced atomically by rename). Not synchronized; the service serializes
/// writers.
class AnnotationStore {
 public:
  AnnotationStore(std::string sample_id, std::filesystem::path dir, std::size_t snapshot_every = 64)
      : sample_id_(std::move(sample_id)), dir_(std::move(dir)), snapshot_every_(snapshot_every) {
    std::filesystem::create_directories(dir_);
    recover();
    fd_ = ::open(journal_path().c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw DataError("cannot open journal '" + journal_path().string() + "': " + std::strerror(errno));
  }

  AnnotationStore(const AnnotationStore&) = delete;
  AnnotationStore& operator=(const AnnotationStore&) = delete;

  ~AnnotationStore() {
    if (fd_ >= 0) ::close(fd_);
  }

  const std::string& sample_id() const { return sample_id_; }
  Phase phase() const { return phase_; }
  std::uint64_t seq() const { return seq_; }

  /// (post_id, annotator) -> label
  const std::map<std::pair<std::string, std::string>, Label>& labels() const { return labels_; }
  const std::map<std::string, std::string>& resolutions() const { return resolutions_; }
  const std::vector<AuditEntry>& audit() const { return audit_; }

  std::optional<Label> label(const std::string& post_id, const std::string& annotator) const {
    auto it = labels_.find({post_id, annotator});
    if (it == labels_.end()) return std::nullopt;
    return it->second;
  }

  std::filesystem::path journal_path() const { return dir_ / (sample_id_ + ".journal.jsonl"); }
  std::filesystem::path snapshot_path() const { return dir_ / (sample_id_ + ".snapshot.json"); }

  SubmitStatus put_label(const std::string& post_id, const std::string& annotator, const std::string& class_id,
                         Timestamp at) {
    auto cur = label(post_id, annotator);
    if (cur && cur->class_id == class_id) return SubmitStatus::Unchanged;
    nlohmann::json e{{"op", "label"}, {"post_id", post_id}, {"annotator", annotator}, {"class", class_id},
                     {"at", format_rfc3339(at)}};
    if (cur) e["previous"] = cur->class_id;
    commit(std::move(e));
    return cur ? SubmitStatus::Updated : SubmitStatus::Created;
  }

  void put_phase(Phase p) {
    if (p == phase_) return;
    commit({{"op", "phase"}, {"phase", to_string(p)}});
  }

  SubmitStatus put_resolution(const std::string& post_id, const std::string& class_id) {
    auto it = resolutions_.find(post_id);
    if (it != resolutions_.end() && it->second == class_id) return SubmitStatus::Unchanged;
    const bool existed = it != resolutions_.end();
    commit({{"op", "resolve"}, {"post_id", post_id}, {"class", class_id}});
    return existed ? SubmitStatus::Updated : SubmitStatus::Created;
  }

  /// Writes the snapshot now.
  void snapshot() const {
    nlohmann::json j;
    j["sample_id"] = sample_id_;
    j["seq"] = seq_;
    j["phase"] = to_string(phase_);
    nlohmann::json ls = nlohmann::json::array();
    for (const auto& [k, v] : labels_) {
      ls.push_back({{"post_id", k.first}, {"annotator", k.second}, {"class", v.class_id}, {"at", format_rfc3339(v.at)}});
    }
    j["labels"] = ls;
    j["resolutions"] = resolutions_;
    nlohmann::json au = nlohmann::json::array();
    for (const auto& a : audit_) {
      au.push_back({{"seq", a.seq}, {"post_id", a.post_id}, {"annotator", a.annotator}, {"previous", a.previous},
                    {"current", a.current}, {"at", format_rfc3339(a.at)}});
    }
    j["audit"] = au;
    const auto tmp = snapshot_path().string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << j.dump() << '\n';
      out.flush();
      if (!out) throw DataError("cannot write snapshot '" + tmp + "'");
    }
    std::filesystem::rename(tmp, snapshot_path());
  }

 private:
  void commit(nlohmann::json e) {
    e["seq"] = seq_ + 1;
    const std::string line = e.dump() + "\n";
    std::size_t off = 0;
    while (off < line.size()) {
      const auto n = ::write(fd_, line.data() + off, line.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw DataError("journal write failed: " + std::string(std::strerror(errno)));
      }
      off += static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) throw DataError("journal fsync failed: " + std::string(std::strerror(errno)));
    apply(e);
    if (snapshot_every_ && seq_ % snapshot_every_ == 0) snapshot();
  }

  void apply(const nlohmann::json& e) {
    const auto op = e.at("op").get<std::string>();
    seq_ = e.at("seq").get<std::uint64_t>();
    if (op == "label") {
      const auto post = e.at("post_id").get<std::string>();
      const auto who = e.at("annotator").get<std::string>();
      const auto cls = e.at("class").get<std::string>();
      const auto at = parse_rfc3339(e.at("at").get<std::string>()).value_or(Timestamp{});
      auto& slot = labels_[{post, who}];
      if (!slot.class_id.empty()) audit_.push_back({seq_, post, who, slot.class_id, cls, at});
      slot = Label{cls, at};
    } else if (op == "phase") {
      phase_ = parse_phase(e.at("phase").get<std::string>());
    } else if (op == "resolve") {
      resolutions_[e.at("post_id").get<std::string>()] = e.at("class").get<std::string>();
    } else {
      throw DataError("journal: unknown op '" + op + "'");
    }
  }

  void recover() {
    if (std::filesystem::exists(snapshot_path())) {
      std::ifstream in(snapshot_path());
      try {
        auto j = nlohmann::json::parse(in);
        seq_ = j.at("seq").get<std::uint64_t>();
        phase_ = parse_phase(j.at("phase").get<std::string>());
        for (const auto& l : j.at("labels")) {
          labels_[{l.at("post_id").get<std::string>(), l.at("annotator").get<std::string>()}] =
              Label{l.at("class").get<std::string>(), parse_rfc3339(l.at("at").get<std::string>()).value_or(Timestamp{})};
        }
        resolutions_ = j.at("resolutions").get<std::map<std::string, std::string>>();
        for (const auto& a : j.at("audit")) {
          audit_.push_back({a.at("seq").get<std::uint64_t>(), a.at("post_id").get<std::string>(),
                            a.at("annotator").get<std::string>(), a.at("previous").get<std::string>(),
                            a.at("current").get<std::string>(),
                            parse_rfc3339(a.at("at").get<std::string>()).value_or(Timestamp{})});
        }
      } catch (const nlohmann::json::exception& e) {
        throw DataError("snapshot '" + snapshot_path().string() + "' is corrupt: " + e.what());
      }
    }
    if (!std::filesystem::exists(journal_path())) return;
    std::ifstream in(journal_path());
    std::string line;
    std::uintmax_t good_bytes = 0;
    bool torn = false;
    while (std::getline(in, line)) {
      // A line without its newline was cut short by a crash; drop it.
      if (in.eof()) {
        torn = true;
        break;
      }
      good_bytes += line.size() + 1;
      if (line.empty()) continue;
      nlohmann::json e;
      try {
        e = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error&) {
        throw DataError("journal '" + journal_path().string() + "' is corrupt at sequence " +
                        std::to_string(seq_ + 1));
      }
      if (e.at("seq").get<std::uint64_t>() <= seq_) continue;
      apply(e);
    }
    if (torn) std::filesystem::resize_file(journal_path(), good_bytes);
  }

  std::string sample_id_;
  std::filesystem::path dir_;
  std::size_t snapshot_every_;
  int fd_ = -1;
  std::uint64_t seq_ = 0;
  Phase phase_ = Phase::Annotation;
  std::map<std::pair<std::string, std::string>, Label> labels_;
  std::map<std::string, std::string> resolutions_;
  std::vector<AuditEntry> audit_;
};

struct NextPost {
  std::size_t ordinal = 0;
  AnnotationPost post;
  std::size_t labeled = 0;
  std::size_t total = 0;
};

struct LiveAgreement {
  KappaResult kappa;
  std::vector<std::string> annotators;
  /// Posts labeled by every annotator above.
  std::size_t co_labeled = 0;
  /// Posts with two or more labels that are not unanimous, in sample order.
  std::vector<std::string> conflicts;
};

struct ExportRow {
  std::string post_id;
  std::string annotator;
  std::string class_id;
};

/// Several samples behind one reader/writer lock. Label writes take the
/// exclusive lock, so the journal has a single writer at a time.
class AnnotationService {
 public:
  AnnotationService(CodingScheme scheme, std::set<std::string> annotators, Clock clock = system_now)
      : scheme_(std::move(scheme)), annotators_(std::move(annotators)), clock_(std::move(clock)) {}

  const CodingScheme& scheme() const { return scheme_; }
  const std::set<std::string>& annotators() const { return annotators_; }

  void add_sample(AnnotationSample sample, const std::filesystem::path& store_dir, std::size_t snapshot_every = 64) {
    std::unique_lock lock(mu_);
    if (samples_.contains(sample.id)) throw ValidationError("sample '" + sample.id + "' is already loaded");
    auto st = std::make_unique<State>();
    for (std::size_t i = 0; i < sample.posts.size(); ++i) st->ordinal.emplace(sample.posts[i].post_id, i);
    st->store = std::make_unique<AnnotationStore>(sample.id, store_dir, snapshot_every);
    st->sample = std::move(sample);
    samples_.emplace(st->sample.id, std::move(st));
  }

  std::vector<std::string> sample_ids() const {
    std::shared_lock lock(mu_);
    std::vector<std::string> out;
    for (const auto& [k, v] : samples_) out.push_back(k);
    return out;
  }

  Phase phase(const std::string& sample_id) const {
    std::shared_lock lock(mu_);
    return state(sample_id).store->phase();
  }

  /// Lowest-ordinal post this annotator has not labeled; nullopt when done.
  std::optional<NextPost> next_unlabeled(const std::string& sample_id, const std::string& annotator) const {
    std::shared_lock lock(mu_);
    const auto& st = state(sample_id);
    require_annotator(annotator);
    std::optional<NextPost> next;
    std::size_t labeled = 0;
    for (std::size_t i = 0; i < st.sample.posts.size(); ++i) {
      if (st.store->label(st.sample.posts[i].post_id, annotator)) ++labeled;
      else if (!next) next = NextPost{i, st.sample.posts[i], 0, st.sample.posts.size()};
    }
    if (next) next->labeled = labeled;
    return next;
  }

  /// Progress as (labeled by annotator, total).
  std::pair<std::size_t, std::size_t> progress(const std::string& sample_id, const std::string& annotator) const {
    std::shared_lock lock(mu_);
    const auto& st = state(sample_id);
    require_annotator(annotator);
    std::size_t n = 0;
    for (const auto& p : st.sample.posts) {
      if (st.store->label(p.post_id, annotator)) ++n;
    }
    return {n, st.sample.posts.size()};
  }

  /// Repeating an identical submission is a no-op, so retried requests never
  /// duplicate a label. A different class overwrites and is audited.
  SubmitStatus submit_label(const std::string& sample_id, const std::string& annotator, const std::string& post_id,
                            const std::string& class_id) {
    std::unique_lock lock(mu_);
    auto& st = state(sample_id);
    require_annotator(annotator);
    require_post(st, post_id);
    require_class(class_id);
    if (st.store->phase() != Phase::Annotation) {
      auto cur = st.store->label(post_id, annotator);
      if (cur && cur->class_id == class_id) return SubmitStatus::Unchanged;
      throw PhaseError("sample '" + sample_id + "' is in the resolution phase; labels are frozen");
    }
    return st.store->put_label(post_id, annotator, class_id, clock_());
  }

  void set_phase(const std::string& sample_id, Phase p) {
    std::unique_lock lock(mu_);
    state(sample_id).store->put_phase(p);
  }

  SubmitStatus resolve(const std::string& sample_id, const std::string& post_id, const std::string& class_id) {
    std::unique_lock lock(mu_);
    auto& st = state(sample_id);
    require_post(st, post_id);
    require_class(class_id);
    if (st.store->phase() != Phase::Resolution) {
      throw PhaseError("resolutions are accepted only in the resolution phase");
    }
    std::size_t n = 0;
    for (const auto& a : annotators_) {
      if (st.store->label(post_id, a)) ++n;
    }
    if (n < 2) throw ValidationError("post '" + post_id + "' has fewer than 2 labels; nothing to resolve");
    return st.store->put_resolution(post_id, class_id);
  }

  /// Cohen's kappa for two annotators, Fleiss's for three or more, over the
  /// posts every labeling annotator has labeled.
  LiveAgreement live_agreement(const std::string& sample_id) const {
    std::shared_lock lock(mu_);
    const auto& st = state(sample_id);
    LiveAgreement out;
    std::set<std::string> active;
    for (const auto& [k, v] : st.store->labels()) active.insert(k.second);
    out.annotators.assign(active.begin(), active.end());
    if (out.annotators.size() < 2) {
      throw InsufficientOverlap("fewer than two annotators have labeled sample '" + sample_id + "'");
    }
    std::vector<std::vector<std::string>> by_rater(out.annotators.size());
    for (const auto& p : st.sample.posts) {
      std::vector<std::string> row;
      std::set<std::string> distinct;
      for (const auto& a : out.annotators) {
        if (auto l = st.store->label(p.post_id, a)) {
          row.push_back(l->class_id);
          distinct.insert(l->class_id);
        }
      }
      if (row.size() >= 2 && distinct.size() > 1) out.conflicts.push_back(p.post_id);
      if (row.size() == out.annotators.size()) {
        for (std::size_t r = 0; r < row.size(); ++r) by_rater[r].push_back(row[r]);
        ++out.co_labeled;
      }
    }
    if (out.co_labeled == 0) throw InsufficientOverlap("no post is labeled by all of its annotators");
    if (out.annotators.size() == 2) {
      out.kappa = cohen_kappa(by_rater[0], by_rater[1]);
    } else {
      std::vector<std::string> cats;
      for (const auto& c : scheme_.all_classes()) cats.push_back(c.id);
      out.kappa = fleiss_kappa(rating_table(by_rater, cats));
    }
    return out;
  }

  /// Labels in sample order then annotator order.
  std::vector<ExportRow> label_rows(const std::string& sample_id) const {
    std::shared_lock lock(mu_);
    const auto& st = state(sample_id);
    std::vector<ExportRow> out;
    for (const auto& p : st.sample.posts) {
      auto it = st.store->labels().lower_bound({p.post_id, std::string{}});
      for (; it != st.store->labels().end() && it->first.first == p.post_id; ++it) {
        out.push_back({p.post_id, it->first.second, it->second.class_id});
      }
    }
    return out;
  }

  /// Resolution where present, else the unanimous label of a post with at
  /// least one label; posts with unresolved conflicts are left out.
  std::vector<std::pair<std::string, std::string>> final_labels(const std::string& sample_id) const {
    std::shared_lock lock(mu_);
    const auto& st = state(sample_id);
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& p : st.sample.posts) {
      if (auto r = st.store->resolutions().find(p.post_id); r != st.store->resolutions().end()) {
        out.emplace_back(p.post_id, r->second);
        continue;
      }
      std::set<std::string> distinct;
      auto it = st.store->labels().lower_bound({p.post_id, std::string{}});
      for (; it != st.store->labels().end() && it->first.first == p.post_id; ++it) distinct.insert(it->second.class_id);
      if (distinct.size() == 1) out.emplace_back(p.post_id, *distinct.begin());
    }
    return out;
  }

  /// `post_id,annotator_id,class_id` rows, a blank line, then
  /// `post_id,final_class` rows.
  void export_csv(const std::string& sample_id, std::ostream& out) const {
    const auto rows = label_rows(sample_id);
    const auto finals = final_labels(sample_id);
    csv::write_row(out, {"post_id", "annotator_id", "class_id"});
    for (const auto& r : rows) csv::write_row(out, {r.post_id, r.annotator, r.class_id});
    out << '\n';
    csv::write_row(out, {"post_id", "final_class"});
    for (const auto& [p, c] : finals) csv::write_row(out, {p, c});
  }

  std::vector<AuditEntry> audit(const std::string& sample_id) const {
    std::shared_lock lock(mu_);
    return state(sample_id).store->audit();
  }

 private:
  struct State {
    AnnotationSample sample;
    std::map<std::string, std::size_t> ordinal;
    std::unique_ptr<AnnotationStore> store;
  };

  const State& state(const std::string& id) const {
    auto it = samples_.find(id);
    if (it == samples_.end()) throw NotFoundError("unknown sample '" + id + "'");
    return *it->second;
  }
  State& state(const std::string& id) {
    auto it = samples_.find(id);
    if (it == samples_.end()) throw NotFoundError("unknown sample '" + id + "'");
    return *it->second;
  }
  void require_annotator(const std::string& a) const {
    if (!annotators_.contains(a)) throw NotFoundError("unknown annotator '" + a + "'");
  }
  static void require_post(const State& st, const std::string& post_id) {
    if (!st.ordinal.contains(post_id)) {
      throw NotFoundError("post '" + post_id + "' is not in sample '" + st.sample.id + "'");
    }
  }
  void require_class(const std::string& class_id) const {
    const auto ids = scheme_.class_ids();
    if (std::find(ids.begin(), ids.end(), class_id) == ids.end()) {
      throw ValidationError("unknown class '" + class_id + "'");
    }
  }

  CodingScheme scheme_;
  std::set<std::string> annotators_;
  Clock clock_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::unique_ptr<State>> samples_;
};

/// Reads the two sections written by export_csv.
struct ExportedLabels {
  std::vector<ExportRow> labels;
  std::vector<std::pair<std::string, std::string>> finals;
};

inline ExportedLabels read_export(std::istream& in) {
  ExportedLabels out;
  csv::Row row;
  int section = 0;
  while (csv::read_row(in, row)) {
    if (row.empty() || (row.size() == 1 && row[0].empty())) continue;
    if (row == csv::Row{"post_id", "annotator_id", "class_id"}) {
      section = 1;
      continue;
    }
    if (row == csv::Row{"post_id", "final_class"}) {
      section = 2;
      continue;
    }
    if (section == 1 && row.size() == 3) out.labels.push_back({row[0], row[1], row[2]});
    else if (section == 2 && row.size() == 2) out.finals.emplace_back(row[0], row[1]);
    else throw DataError("export: unexpected row");
  }
  return out;
}

}  // namespace forumstrat
