#pragma once

// Coding scheme: the ordered class list annotators choose from, with an
// optional merge map folding rare classes into another class.

#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "forumstrat/error.hpp"

namespace forumstrat {

struct CodingClass {
  std::string id;
  std::string name;
  std::string description;
  std::string example;
};

class CodingScheme {
 public:
  CodingScheme() = default;

  CodingScheme(std::vector<CodingClass> classes, std::map<std::string, std::string> merge_map = {})
      : classes_(std::move(classes)), merge_(std::move(merge_map)) {
    validate();
  }

  /// Every class, in scheme order, including merged-away ones.
  const std::vector<CodingClass>& all_classes() const { return classes_; }
  const std::map<std::string, std::string>& merge_map() const { return merge_; }

  /// Classes that remain after merging, in scheme order.
  std::vector<CodingClass> classes() const {
    std::vector<CodingClass> out;
    for (const auto& c : classes_) {
      if (!merge_.contains(c.id)) out.push_back(c);
    }
    return out;
  }

  std::vector<std::string> class_ids() const {
    std::vector<std::string> out;
    for (const auto& c : classes()) out.push_back(c.id);
    return out;
  }

  std::size_t size() const { return classes().size(); }

  bool known(std::string_view id) const {
    for (const auto& c : classes_) {
      if (c.id == id) return true;
    }
    return false;
  }

  /// Maps a class id through the merge map; throws on unknown ids.
  std::string resolve(std::string_view id) const {
    if (!known(id)) throw ValidationError("unknown class '" + std::string(id) + "'");
    std::string cur(id);
    for (std::size_t hops = 0; hops <= classes_.size(); ++hops) {
      auto it = merge_.find(cur);
      if (it == merge_.end()) return cur;
      cur = it->second;
    }
    throw ValidationError("merge map has a cycle through '" + std::string(id) + "'");
  }

  /// Position of the resolved class among classes().
  int index_of(std::string_view id) const {
    const auto r = resolve(id);
    const auto ids = class_ids();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] == r) return static_cast<int>(i);
    }
    throw ValidationError("class '" + std::string(id) + "' resolves outside the scheme");
  }

  /// Returns a copy with `extra` merged into the existing map.
  CodingScheme with_merges(const std::map<std::string, std::string>& extra) const {
    auto m = merge_;
    for (const auto& [k, v] : extra) m[k] = v;
    return CodingScheme(classes_, m);
  }

  nlohmann::json to_json() const {
    nlohmann::json cls = nlohmann::json::array();
    for (const auto& c : classes_) {
      cls.push_back({{"id", c.id}, {"name", c.name}, {"description", c.description}, {"example", c.example}});
    }
    return {{"classes", cls}, {"merge_map", merge_}};
  }

  static CodingScheme from_json(const nlohmann::json& j) {
    try {
      std::vector<CodingClass> cls;
      for (const auto& c : j.at("classes")) {
        cls.push_back({c.at("id").get<std::string>(), c.value("name", c.at("id").get<std::string>()),
                       c.value("description", std::string{}), c.value("example", std::string{})});
      }
      std::map<std::string, std::string> merge;
      if (j.contains("merge_map")) merge = j.at("merge_map").get<std::map<std::string, std::string>>();
      return CodingScheme(std::move(cls), std::move(merge));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("coding scheme: ") + e.what());
    }
  }

  static CodingScheme from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open scheme file '" + path + "'");
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError("scheme file '" + path + "': " + e.what());
    }
  }

 private:
  void validate() const {
    if (classes_.empty()) throw ValidationError("coding scheme has no classes");
    std::set<std::string> ids;
    for (const auto& c : classes_) {
      if (c.id.empty()) throw ValidationError("coding scheme: empty class id");
      if (!ids.insert(c.id).second) throw ValidationError("coding scheme: duplicate class id '" + c.id + "'");
    }
    for (const auto& [from, to] : merge_) {
      if (!ids.contains(from)) throw ValidationError("merge map source '" + from + "' is not a class");
      if (!ids.contains(to)) throw ValidationError("merge map target '" + to + "' is not a class");
      if (from == to) throw ValidationError("merge map maps '" + from + "' to itself");
    }
    for (const auto& [from, to] : merge_) resolve(from);
    if (classes().empty()) throw ValidationError("coding scheme: every class is merged away");
  }

  std::vector<CodingClass> classes_;
  std::map<std::string, std::string> merge_;
};

/// Seven crime-type classes for underground-forum posts.
inline CodingScheme default_scheme() {
  return CodingScheme({
      {"not_criminal", "Not criminal",
       "No link to crime. Covers trading of game items, points and cosmetics.",
       "Anyone up for a match tonight? Add me."},
      {"access_to_system", "Access to system",
       "Gaining access to systems through vulnerabilities with no legitimate testing purpose. Malware use "
       "belongs to another class.",
       "Need a way into someone's mailbox without their password."},
      {"bots_malware", "Bots & Malware",
       "Botnets, malware and services built around them. Social-media bots belong to Spam.",
       "Which crypter keeps my stub undetected?"},
      {"ddos_booting", "DDoS & booting",
       "Denial-of-service attacks and stresser services. Hosting sold with DoS protection is not included.",
       "Booter with 40 Gbps, monthly plans available."},
      {"spam", "Spam",
       "Spam, email lists and marketing schemes where the technique is named. Covers bought traffic, "
       "social-media bots, views and followers.",
       "Selling 10k targeted followers, delivered in a day."},
      {"trading_credentials", "Trading credentials",
       "Buying, selling or giving away accounts and credentials, gaming and social accounts included. Sales "
       "by the owner of the underlying service are excluded.",
       "Fresh streaming accounts, lifetime warranty."},
      {"vpn_hosting", "VPN & hosting",
       "Offers of and requests for VPN and hosting services.",
       "Looking for offshore hosting, will pay in crypto."},
  });
}

}  // namespace forumstrat
