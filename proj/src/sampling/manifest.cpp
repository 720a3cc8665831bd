// SPDX-License-Identifier: Apache-2.0
#include "visnet/sampling.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <regex>
#include <sstream>
#include <unordered_map>

#include "visnet/error.hpp"

namespace visnet {
namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ls(line);
  while (std::getline(ls, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<std::int64_t> parse_int(const std::string& text) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

}  // namespace

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kQuery:
      return "query";
    case Split::kGallery:
      return "gallery";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "query") return Split::kQuery;
  if (text == "gallery") return Split::kGallery;
  return std::nullopt;
}

std::vector<std::size_t> DatasetManifest::indices_of(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == split) out.push_back(i);
  return out;
}

std::optional<MarketName> parse_market_name(std::string_view path) {
  const auto slash = path.find_last_of("/\\");
  const std::string base(slash == std::string_view::npos ? path : path.substr(slash + 1));
  static const std::regex pattern(R"(^(-1|\d+)_c(\d+))");
  std::smatch m;
  if (!std::regex_search(base, m, pattern)) return std::nullopt;
  return MarketName{std::stoll(m[1].str()), std::stoll(m[2].str())};
}

DatasetManifest parse_manifest(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty manifest", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  bool has_ids;
  if (line == "path,pid,camid,split") {
    has_ids = true;
  } else if (line == "path,split") {
    has_ids = false;
  } else {
    throw ParseError("expected header 'path,pid,camid,split', got '" + line + "'", 1);
  }

  DatasetManifest manifest;
  std::unordered_map<std::string, int> seen;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    const std::size_t expected = has_ids ? 4 : 2;
    if (fields.size() != expected) {
      throw ParseError("expected " + std::to_string(expected) + " fields, got " + std::to_string(fields.size()),
                       lineno);
    }
    ManifestRecord r;
    r.path = fields[0];
    if (r.path.empty()) throw ParseError("empty path", lineno);
    const auto split = parse_split(fields.back());
    if (!split) throw ParseError("unknown split '" + fields.back() + "'", lineno);
    r.split = *split;

    std::optional<std::int64_t> pid, cam;
    if (has_ids) {
      if (!fields[1].empty() && !(pid = parse_int(fields[1]))) throw ParseError("bad pid '" + fields[1] + "'", lineno);
      if (!fields[2].empty() && !(cam = parse_int(fields[2]))) throw ParseError("bad camid '" + fields[2] + "'", lineno);
    }
    if (!pid || !cam) {
      const auto name = parse_market_name(r.path);
      if (!name) throw ParseError("no ids given and '" + r.path + "' does not follow the pid_c<cam> naming", lineno);
      if (!pid) pid = name->pid;
      if (!cam) cam = name->camid;
    }
    r.pid = *pid;
    r.camid = *cam;
    if (r.pid < -1) throw InvalidInputError("line " + std::to_string(lineno) + ": negative pid " + std::to_string(r.pid));
    if (r.camid < 0) {
      throw InvalidInputError("line " + std::to_string(lineno) + ": negative camid " + std::to_string(r.camid));
    }
    if (auto [it, fresh] = seen.emplace(r.path, lineno); !fresh) {
      throw InvalidInputError("line " + std::to_string(lineno) + ": duplicate path '" + r.path +
                              "' (first seen on line " + std::to_string(it->second) + ")");
    }
    manifest.records.push_back(std::move(r));
  }
  return manifest;
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open manifest '" + path + "'");
  return parse_manifest(in);
}

void write_manifest(std::ostream& out, const DatasetManifest& manifest) {
  out << "path,pid,camid,split\n";
  for (const auto& r : manifest.records) {
    out << r.path << ',' << r.pid << ',' << r.camid << ',' << split_name(r.split) << '\n';
  }
}

}  // namespace visnet
