// SPDX-License-Identifier: Apache-2.0

#include "mvitac/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "mvitac/error.hpp"
#include "mvitac/rng.hpp"

namespace fs = std::filesystem;

namespace mvitac {

const char* to_string(Task task) {
  switch (task) {
    case Task::category: return "category";
    case Task::hard_soft: return "hardsoft";
    case Task::rough_smooth: return "roughsmooth";
    case Task::grasp: return "grasp";
  }
  return "?";
}

const char* to_string(Layout layout) { return layout == Layout::pair ? "pair" : "grasp"; }

Task parse_task(const std::string& name) {
  if (name == "category") return Task::category;
  if (name == "hardsoft") return Task::hard_soft;
  if (name == "roughsmooth") return Task::rough_smooth;
  if (name == "grasp") return Task::grasp;
  throw ConfigError("unknown task '" + name + "' (expected category|hardsoft|roughsmooth|grasp)");
}

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name, const fs::path& file) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DatasetFormatError(file.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

CsvTable read_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DatasetFormatError("cannot read " + file.string());
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    if (first) {
      t.header = split_csv_line(line);
      first = false;
    } else {
      auto row = split_csv_line(line);
      row.resize(std::max(row.size(), t.header.size()));
      t.rows.push_back(std::move(row));
    }
  }
  if (first) throw DatasetFormatError(file.string() + ": missing header row");
  return t;
}

std::optional<int> parse_label(const std::string& value, const fs::path& file, const std::string& stem) {
  if (value.empty()) return std::nullopt;
  int out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || out < 0) {
    throw DatasetFormatError(file.string() + ": label '" + value + "' for stem '" + stem +
                             "' is not a non-negative integer");
  }
  return out;
}

std::set<std::string> png_stems(const fs::path& dir) {
  std::set<std::string> stems;
  if (!fs::is_directory(dir)) return stems;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") stems.insert(e.path().stem().string());
  }
  return stems;
}

}  // namespace

PairedDataset load_pair_dataset(const fs::path& root) {
  const fs::path labels_file = root / "labels.csv";
  if (!fs::is_regular_file(labels_file)) {
    throw DatasetFormatError("pair dataset at " + root.string() + " has no labels.csv");
  }
  const CsvTable labels = read_csv(labels_file);
  const std::size_t c_stem = labels.column("stem", labels_file);
  const std::size_t c_cat = labels.column("category", labels_file);
  const std::size_t c_hs = labels.column("hard_soft", labels_file);
  const std::size_t c_rs = labels.column("rough_smooth", labels_file);

  std::map<std::string, std::array<std::optional<int>, kTaskCount>> by_stem;
  for (const auto& row : labels.rows) {
    const std::string& stem = row[c_stem];
    if (stem.empty()) throw DatasetFormatError(labels_file.string() + ": empty stem");
    std::array<std::optional<int>, kTaskCount> l{};
    l[0] = parse_label(row[c_cat], labels_file, stem);
    l[1] = parse_label(row[c_hs], labels_file, stem);
    l[2] = parse_label(row[c_rs], labels_file, stem);
    if (!by_stem.emplace(stem, l).second) {
      throw DatasetFormatError(labels_file.string() + ": duplicate stem '" + stem + "'");
    }
  }

  std::map<std::string, Split> splits;
  const fs::path split_file = root / "split.csv";
  if (fs::is_regular_file(split_file)) {
    const CsvTable t = read_csv(split_file);
    const std::size_t c_s = t.column("stem", split_file);
    const std::size_t c_p = t.column("split", split_file);
    for (const auto& row : t.rows) {
      Split s;
      if (row[c_p] == "train") {
        s = Split::train;
      } else if (row[c_p] == "test") {
        s = Split::test;
      } else {
        throw DatasetFormatError(split_file.string() + ": split must be train|test, got '" + row[c_p] + "'");
      }
      if (!splits.emplace(row[c_s], s).second) {
        throw DatasetFormatError(split_file.string() + ": duplicate stem '" + row[c_s] + "'");
      }
    }
  }

  const auto visual = png_stems(root / "visual");
  const auto tactile = png_stems(root / "tactile");
  PairedDataset ds;
  ds.layout = Layout::pair;
  for (const auto& stem : visual) {
    if (!tactile.count(stem)) {
      ++ds.skipped;
      continue;
    }
    PairedSample s;
    s.stem = stem;
    s.visual = read_png(root / "visual" / (stem + ".png"));
    s.tactile = read_png(root / "tactile" / (stem + ".png"));
    if (auto it = by_stem.find(stem); it != by_stem.end()) s.labels = it->second;
    if (auto it = splits.find(stem); it != splits.end()) s.split = it->second;
    ds.samples.push_back(std::move(s));
  }
  for (const auto& stem : tactile) {
    if (!visual.count(stem)) ++ds.skipped;
  }
  return ds;
}

PairedDataset load_grasp_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw DatasetFormatError("grasp dataset root " + root.string() + " is not a directory");
  std::vector<fs::path> attempts;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) attempts.push_back(e.path());
  }
  std::sort(attempts.begin(), attempts.end());
  PairedDataset ds;
  ds.layout = Layout::grasp;
  for (const auto& dir : attempts) {
    const fs::path rgb = dir / "rgb_during.png";
    const fs::path left = dir / "tac_left_during.png";
    const fs::path right = dir / "tac_right_during.png";
    if (!fs::is_regular_file(rgb) || !fs::is_regular_file(left) || !fs::is_regular_file(right)) {
      ++ds.skipped;
      continue;
    }
    const fs::path label_file = dir / "label.txt";
    std::ifstream in(label_file);
    if (!in) throw DatasetFormatError("grasp attempt " + dir.string() + " has no label.txt");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    text = trim(text);
    if (text != "0" && text != "1") {
      throw DatasetFormatError(label_file.string() + ": grasp label must be 0 or 1, got '" + text + "'");
    }
    PairedSample s;
    s.stem = dir.filename().string();
    s.visual = read_png(rgb);
    s.tactile = stack_channels(read_png(left), read_png(right));
    s.set_label(Task::grasp, text == "1" ? 1 : 0);
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty() && ds.skipped == 0) {
    throw DatasetFormatError("grasp dataset at " + root.string() + " contains no attempt directories");
  }
  return ds;
}

Layout detect_layout(const fs::path& root) {
  if (!fs::is_directory(root)) throw DatasetFormatError("dataset root " + root.string() + " is not a directory");
  if (fs::is_regular_file(root / "labels.csv")) return Layout::pair;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::is_regular_file(e.path() / "rgb_during.png")) return Layout::grasp;
  }
  throw DatasetFormatError("unrecognized dataset layout at " + root.string() +
                           " (expected labels.csv or <attempt>/rgb_during.png)");
}

PairedDataset load_dataset(const fs::path& root) {
  return detect_layout(root) == Layout::pair ? load_pair_dataset(root) : load_grasp_dataset(root);
}

void export_pair_dataset(const PairedDataset& dataset, const fs::path& root) {
  std::error_code ec;
  fs::create_directories(root / "visual", ec);
  if (!ec) fs::create_directories(root / "tactile", ec);
  if (ec) throw DatasetFormatError("cannot create " + root.string() + ": " + ec.message());
  std::ofstream labels(root / "labels.csv");
  if (!labels) throw DatasetFormatError("cannot write " + (root / "labels.csv").string());
  labels << "stem,category,hard_soft,rough_smooth\n";
  bool any_split = false;
  for (const auto& s : dataset.samples) {
    if (s.tactile.channels != 3) throw DatasetFormatError("pair layout requires 3-channel tactile images");
    write_png(s.visual, root / "visual" / (s.stem + ".png"));
    write_png(s.tactile, root / "tactile" / (s.stem + ".png"));
    labels << s.stem;
    for (std::size_t t = 0; t < 3; ++t) {
      labels << ',';
      if (s.labels[t]) labels << *s.labels[t];
    }
    labels << '\n';
    any_split = any_split || s.split != Split::unassigned;
  }
  if (!labels) throw DatasetFormatError("failed writing labels.csv");
  if (any_split) {
    std::ofstream split(root / "split.csv");
    split << "stem,split\n";
    for (const auto& s : dataset.samples) {
      if (s.split != Split::unassigned) split << s.stem << ',' << (s.split == Split::train ? "train" : "test") << '\n';
    }
    if (!split) throw DatasetFormatError("failed writing split.csv");
  }
}

std::vector<std::size_t> split_indices(const PairedDataset& dataset, Split split, std::uint64_t seed) {
  const std::size_t n = dataset.size();
  const bool assigned = std::any_of(dataset.samples.begin(), dataset.samples.end(),
                                    [](const PairedSample& s) { return s.split != Split::unassigned; });
  std::vector<std::size_t> out;
  if (assigned) {
    for (std::size_t i = 0; i < n; ++i) {
      const Split s = dataset.samples[i].split == Split::unassigned ? Split::train : dataset.samples[i].split;
      if (s == split) out.push_back(i);
    }
    return out;
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, {0x5b11}));
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
  const std::size_t n_train = (n * 4 + 2) / 5;
  if (split == Split::train) {
    out.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  } else if (split == Split::test) {
    out.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t class_count(const PairedDataset& dataset, Task task) {
  int mx = -1;
  for (const auto& s : dataset.samples) {
    if (auto l = s.label(task)) mx = std::max(mx, *l);
  }
  return static_cast<std::size_t>(mx + 1);
}

Batcher::Batcher(std::size_t dataset_size, std::size_t batch_size, std::uint64_t shuffle_seed, bool drop_last)
    : size_(dataset_size), batch_(batch_size), seed_(shuffle_seed), drop_last_(drop_last) {
  if (batch_size < 2) throw ConfigError("batcher: batch_size must be >= 2 (InfoNCE needs a negative)");
}

std::size_t Batcher::batches_per_epoch() const {
  return drop_last_ ? size_ / batch_ : (size_ + batch_ - 1) / batch_;
}

std::vector<std::vector<std::size_t>> Batcher::epoch(std::size_t epoch_index) const {
  std::vector<std::size_t> perm(size_);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed_, {epoch_index}));
  for (std::size_t i = size_; i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < batches_per_epoch(); ++b) {
    const std::size_t lo = b * batch_;
    const std::size_t hi = std::min(lo + batch_, size_);
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(lo), perm.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return out;
}

}  // namespace mvitac
