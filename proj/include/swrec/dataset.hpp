#pragma once

// On-disk dataset layout, one directory per dataset:
//
//   matrix.csr   little-endian binary: 8-byte magic "SWRCSR01", u64 n, u64 m,
//                u64 nnz, u64 row_ptr[n + 1], u32 col[nnz]
//   users.txt    one user id per line, in dense index order
//   items.txt    one item id per line, in dense index order
//   split.json   optional: {"fold_in_fraction", "seed", "train_users",
//                "val": [{"user", "fold_in", "holdout"}...], "test": [...]}
//   truth.json   optional ground truth written by the generator
//
// Cluster files are JSON: {"K", "R", "m", "assignments": [[...]...], ...}.

#include <Eigen/Dense>
#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swrec/core.hpp"
#include "swrec/grouping.hpp"
#include "swrec/ingest.hpp"
#include "swrec/spectral.hpp"

namespace swrec {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace io {

inline constexpr char kCsrMagic[8] = {'S', 'W', 'R', 'C', 'S', 'R', '0', '1'};

template <class T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void put_array(std::ostream& out, const std::vector<T>& v) {
  if (!v.empty()) out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
}

template <class T>
T get(std::istream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(in), ErrorKind::parse, "truncated file while reading " + what);
  return v;
}

template <class T>
std::vector<T> get_array(std::istream& in, std::uint64_t count, const std::string& what) {
  require(count < (std::uint64_t{1} << 40), ErrorKind::parse, "implausible length for " + what);
  std::vector<T> v(count);
  if (count) in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(T)));
  require(static_cast<bool>(in), ErrorKind::parse, "truncated file while reading " + what);
  return v;
}

inline std::ofstream open_out(const std::filesystem::path& p, bool binary = false) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, binary ? std::ios::binary : std::ios::out);
  require(static_cast<bool>(out), ErrorKind::io, "cannot open " + p.string() + " for writing");
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& p, bool binary = false) {
  std::ifstream in(p, binary ? std::ios::binary : std::ios::in);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + p.string());
  return in;
}

inline std::string read_file(const std::filesystem::path& p) {
  auto in = open_in(p, true);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& p, std::string_view content) {
  auto out = open_out(p, true);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  require(static_cast<bool>(out), ErrorKind::io, "failed writing " + p.string());
}

inline nlohmann::json read_json(const std::filesystem::path& p) {
  const std::string text = read_file(p);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, p.string() + ": " + e.what());
  }
}

/// Deterministic JSON text (sorted keys, fixed indentation, trailing newline).
inline void write_json(const std::filesystem::path& p, const nlohmann::json& j) { write_file(p, j.dump(2) + "\n"); }

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  auto in = open_in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

}  // namespace io

inline void write_matrix(std::ostream& out, const InteractionMatrix& x) {
  out.write(io::kCsrMagic, 8);
  io::put<std::uint64_t>(out, x.n());
  io::put<std::uint64_t>(out, x.m());
  io::put<std::uint64_t>(out, x.nnz());
  io::put_array(out, x.row_ptr());
  io::put_array(out, x.col_idx());
}

inline InteractionMatrix read_matrix(std::istream& in, std::vector<std::string> user_ids,
                                     std::vector<std::string> item_ids) {
  char magic[8];
  in.read(magic, 8);
  require(in && std::memcmp(magic, io::kCsrMagic, 8) == 0, ErrorKind::parse, "not a matrix.csr file (bad magic)");
  const auto n = io::get<std::uint64_t>(in, "n");
  const auto m = io::get<std::uint64_t>(in, "m");
  const auto nnz = io::get<std::uint64_t>(in, "nnz");
  auto row_ptr = io::get_array<std::uint64_t>(in, n + 1, "row pointers");
  auto col = io::get_array<index_t>(in, nnz, "column indices");
  if (user_ids.empty())
    for (std::uint64_t u = 0; u < n; ++u) user_ids.push_back(std::to_string(u));
  if (item_ids.empty())
    for (std::uint64_t i = 0; i < m; ++i) item_ids.push_back(std::to_string(i));
  return InteractionMatrix::from_csr(m, std::move(row_ptr), std::move(col), std::move(user_ids), std::move(item_ids));
}

inline nlohmann::json split_to_json(const SplitResult& s) {
  auto users = [](const std::vector<HeldOutUser>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& h : v) a.push_back({{"user", h.user}, {"fold_in", h.fold_in}, {"holdout", h.holdout}});
    return a;
  };
  return {{"fold_in_fraction", s.spec.fold_in_fraction},
          {"seed", s.spec.seed},
          {"train_users", s.spec.train_users},
          {"val", users(s.val)},
          {"test", users(s.test)}};
}

inline SplitResult split_from_json(const nlohmann::json& j) {
  try {
    SplitResult s;
    s.spec.fold_in_fraction = j.at("fold_in_fraction").get<double>();
    s.spec.seed = j.at("seed").get<std::uint64_t>();
    s.spec.train_users = j.at("train_users").get<std::vector<index_t>>();
    auto users = [](const nlohmann::json& a, std::vector<index_t>& ids) {
      std::vector<HeldOutUser> v;
      for (const auto& e : a) {
        HeldOutUser h;
        h.user = e.at("user").get<index_t>();
        h.fold_in = e.at("fold_in").get<std::vector<index_t>>();
        h.holdout = e.at("holdout").get<std::vector<index_t>>();
        ids.push_back(h.user);
        v.push_back(std::move(h));
      }
      return v;
    };
    s.val = users(j.at("val"), s.spec.val_users);
    s.test = users(j.at("test"), s.spec.test_users);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed split: ") + e.what());
  }
}

struct Dataset {
  InteractionMatrix matrix;
  std::optional<SplitResult> split;

  /// Content hash of the matrix and id maps (independent of the split).
  std::string fingerprint() const {
    std::ostringstream s(std::ios::binary);
    write_matrix(s, matrix);
    Fnv1a h;
    h.update(s.str());
    for (const auto& u : matrix.user_ids()) h.update(u).update("\n");
    for (const auto& i : matrix.item_ids()) h.update(i).update("\n");
    return h.hex();
  }

  const SplitResult& require_split() const {
    require(split.has_value(), ErrorKind::config, "dataset has no split.json; run ingest with a split first");
    return *split;
  }
};

inline void save_dataset(const std::filesystem::path& dir, const Dataset& d) {
  std::filesystem::create_directories(dir);
  {
    auto out = io::open_out(dir / "matrix.csr", true);
    write_matrix(out, d.matrix);
    require(static_cast<bool>(out), ErrorKind::io, "failed writing matrix.csr");
  }
  {
    auto out = io::open_out(dir / "users.txt");
    for (const auto& u : d.matrix.user_ids()) out << u << '\n';
  }
  {
    auto out = io::open_out(dir / "items.txt");
    for (const auto& i : d.matrix.item_ids()) out << i << '\n';
  }
  if (d.split) io::write_json(dir / "split.json", split_to_json(*d.split));
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  require(std::filesystem::is_directory(dir), ErrorKind::io, dir.string() + " is not a dataset directory");
  Dataset d;
  std::vector<std::string> users, items;
  if (std::filesystem::exists(dir / "users.txt")) users = io::read_lines(dir / "users.txt");
  if (std::filesystem::exists(dir / "items.txt")) items = io::read_lines(dir / "items.txt");
  auto in = io::open_in(dir / "matrix.csr", true);
  d.matrix = read_matrix(in, std::move(users), std::move(items));
  if (std::filesystem::exists(dir / "split.json")) d.split = split_from_json(io::read_json(dir / "split.json"));
  return d;
}

/// Training rows of a split: the train users' full histories.
inline std::vector<index_t> training_users(const Dataset& d) {
  return d.split ? d.split->spec.train_users : iota_indices(d.matrix.n());
}

/// Sub-matrix with the given users as rows (ids are carried over).
inline InteractionMatrix select_users(const InteractionMatrix& x, std::span<const index_t> users) {
  std::vector<std::vector<index_t>> rows;
  std::vector<std::string> ids;
  rows.reserve(users.size());
  for (index_t u : users) {
    const auto r = x.row(u);
    rows.emplace_back(r.begin(), r.end());
    ids.push_back(x.user_ids()[u]);
  }
  return InteractionMatrix::from_rows(x.m(), std::move(rows), std::move(ids), x.item_ids());
}

// ---------------------------------------------------------------------------
// Clusters and embeddings.

inline nlohmann::json clusters_to_json(const OverlappingClusters& c) {
  nlohmann::json a = nlohmann::json::array();
  for (std::size_t i = 0; i < c.m; ++i) {
    const auto s = c.of(i);
    a.push_back(std::vector<index_t>(s.begin(), s.end()));
  }
  return {{"m", c.m}, {"K", c.K}, {"R", c.R}, {"inertia", c.inertia}, {"empty_clusters", c.empty_clusters},
          {"assignments", a}};
}

inline OverlappingClusters clusters_from_json(const nlohmann::json& j) {
  try {
    OverlappingClusters c;
    c.m = j.at("m").get<std::size_t>();
    c.K = j.at("K").get<std::size_t>();
    c.R = j.at("R").get<std::size_t>();
    c.inertia = j.value("inertia", 0.0);
    const auto& a = j.at("assignments");
    require(a.size() == c.m, ErrorKind::parse, "assignment list length differs from m");
    for (const auto& row : a) {
      auto v = row.get<std::vector<index_t>>();
      require(v.size() == c.R, ErrorKind::integrity, "an item has a number of clusters different from R");
      std::sort(v.begin(), v.end());
      c.members.insert(c.members.end(), v.begin(), v.end());
    }
    c.refresh_empty();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed clusters file: ") + e.what());
  }
}

/// Text matrix: one row per line, values separated by spaces.
inline void write_embedding(std::ostream& out, const Eigen::MatrixXd& coords) {
  char buf[40];
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    for (Eigen::Index f = 0; f < coords.cols(); ++f) {
      std::snprintf(buf, sizeof buf, "%.17g", coords(i, f));
      if (f) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

inline Eigen::MatrixXd read_embedding(std::istream& in) {
  std::vector<std::vector<double>> rows;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    std::istringstream s(line);
    std::vector<double> r;
    for (double v; s >> v;) r.push_back(v);
    require(rows.empty() || r.size() == rows.front().size(), ErrorKind::parse, "ragged embedding rows");
    rows.push_back(std::move(r));
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.empty() ? 0 : rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t f = 0; f < rows[i].size(); ++f)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = rows[i][f];
  return m;
}

}  // namespace swrec
