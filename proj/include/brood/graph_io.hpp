#pragma once

// JSON and dense-CSV encodings of DAGs, search spaces and orders.
//
//   JSON:  {"p": 3, "edges": [[0, 1], [1, 2]]}     (0-based, [src, dst])
//   CSV:   p rows of p comma-separated 0/1 values; row j, column i is j -> i.

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "brood/graph.hpp"

namespace brood {

using json = nlohmann::json;

inline json edges_to_json(int p, const std::vector<Edge>& edges) {
  json arr = json::array();
  for (const Edge& e : edges) arr.push_back({e.src, e.dst});
  return json{{"p", p}, {"edges", std::move(arr)}};
}

inline json to_json(const Dag& g) { return edges_to_json(g.p(), g.edges()); }

inline json to_json(const SearchSpace& h) {
  json j = edges_to_json(h.p(), h.edges());
  if (h.cap()) j["cap"] = *h.cap();
  return j;
}

inline json to_json(const TopOrder& o) { return json(std::vector<int>(o.perm().begin(), o.perm().end())); }

inline std::pair<int, std::vector<Edge>> edges_from_json(const json& j) {
  require(j.is_object() && j.contains("p") && j.contains("edges"), "graph JSON needs \"p\" and \"edges\"");
  const int p = j.at("p").get<int>();
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) {
    require(e.is_array() && e.size() == 2, "graph JSON edge must be [src, dst]");
    edges.push_back({e[0].get<int>(), e[1].get<int>()});
  }
  return {p, std::move(edges)};
}

inline Dag dag_from_json(const json& j) {
  auto [p, edges] = edges_from_json(j);
  return Dag::from_edges(p, edges);
}

inline SearchSpace space_from_json(const json& j, std::optional<int> cap = std::nullopt) {
  auto [p, edges] = edges_from_json(j);
  if (!cap && j.contains("cap")) cap = j.at("cap").get<int>();
  return SearchSpace::from_edges(p, edges, cap);
}

inline TopOrder order_from_json(const json& j) { return TopOrder(j.get<std::vector<int>>()); }

inline std::string adjacency_csv(int p, const std::vector<Edge>& edges) {
  std::vector<std::vector<int>> a(p, std::vector<int>(p, 0));
  for (const Edge& e : edges) a[e.src][e.dst] = 1;
  std::ostringstream os;
  for (int r = 0; r < p; ++r) {
    for (int c = 0; c < p; ++c) os << (c ? "," : "") << a[r][c];
    os << '\n';
  }
  return os.str();
}

/// Parses a dense 0/1 adjacency CSV into an edge list (row = source).
inline std::pair<int, std::vector<Edge>> edges_from_adjacency_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::vector<std::vector<int>> rows;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<int> row;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      require(cell == "0" || cell == "1", "adjacency CSV cells must be 0 or 1");
      row.push_back(cell == "1");
    }
    rows.push_back(std::move(row));
  }
  const int p = static_cast<int>(rows.size());
  std::vector<Edge> edges;
  for (int r = 0; r < p; ++r) {
    require(static_cast<int>(rows[r].size()) == p, "adjacency CSV must be square");
    for (int c = 0; c < p; ++c)
      if (rows[r][c]) edges.push_back({r, c});
  }
  return {p, std::move(edges)};
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path);
  out << text;
}

/// Loads a search space from either the JSON or the CSV encoding (by extension).
inline SearchSpace load_space(const std::string& path, std::optional<int> cap = std::nullopt) {
  const std::string text = read_text_file(path);
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") {
    auto [p, edges] = edges_from_adjacency_csv(text);
    return SearchSpace::from_edges(p, edges, cap);
  }
  return space_from_json(json::parse(text), cap);
}

}  // namespace brood
