#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "forumstrat/graph.hpp"

namespace testsupport {

inline forumstrat::PostRecord rec(const std::string& thread, const std::string& member, const std::string& post,
                                  const std::string& content = "text", const std::string& type = "offer",
                                  int minute = 0, const std::string& board = "b") {
  forumstrat::PostRecord r;
  r.forum = "f";
  r.board = board;
  r.thread_id = thread;
  r.thread_title = "title " + thread;
  r.member_id = member;
  r.post_id = post;
  r.content = content;
  r.post_type = type;
  r.timestamp = forumstrat::Timestamp{std::chrono::sys_days{std::chrono::year{2020} / 1 / 1}} +
                std::chrono::minutes(minute);
  return r;
}

/// Random records over `members` x `threads`; member i posts with weight
/// 1/(i+1) so activity is skewed.
inline std::vector<forumstrat::PostRecord> random_records(std::uint64_t seed, std::size_t posts, std::size_t members,
                                                          std::size_t threads) {
  std::mt19937_64 g(seed);
  std::vector<double> w;
  for (std::size_t i = 0; i < members; ++i) w.push_back(1.0 / static_cast<double>(i + 1));
  std::discrete_distribution<std::size_t> who(w.begin(), w.end());
  std::uniform_int_distribution<std::size_t> where(0, threads - 1);
  static const char* types[] = {"offer", "request", "exchange", "tutorial", "other"};
  std::vector<forumstrat::PostRecord> out;
  for (std::size_t p = 0; p < posts; ++p) {
    const auto t = where(g);
    out.push_back(rec("t" + std::to_string(t), "m" + std::to_string(who(g)), "p" + std::to_string(p), "x",
                      types[g() % 5], static_cast<int>(p), "b" + std::to_string(t % 3)));
  }
  return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("forumstrat_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testsupport
