#include "disasterlens/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "disasterlens/errors.hpp"
#include "disasterlens/rng.hpp"

namespace disasterlens {

namespace {

constexpr std::array<std::string_view, kClassCount> kClassNames = {
    "buildings_collapsed", "flames_or_smoke", "flood", "forests_rivers", "urban_landscape",
};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// RFC 4180 style: fields may be double-quoted, "" is an escaped quote.
std::vector<std::string> parse_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = was_quoted = true;
    } else if (c == ',') {
      fields.push_back(was_quoted ? cur : trim(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur += c;
    }
  }
  if (quoted) throw ParseError(line_no, "unterminated quoted field");
  fields.push_back(was_quoted ? cur : trim(cur));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void check_split_spec(const SplitSpec& spec) {
  if (spec.train_fraction.has_value() == spec.test_count.has_value()) {
    throw ConfigError("split needs exactly one of train fraction or test count");
  }
  if (spec.train_fraction && !(*spec.train_fraction > 0.0 && *spec.train_fraction < 1.0)) {
    throw ConfigError("train fraction must lie in (0,1)");
  }
}

std::size_t test_size_for(std::size_t n, const SplitSpec& spec) {
  std::size_t test = 0;
  if (spec.test_count) {
    test = *spec.test_count;
  } else {
    const auto train = static_cast<std::size_t>(std::llround(*spec.train_fraction * static_cast<double>(n)));
    test = n - std::min(train, n);
  }
  if (test == 0 || test >= n) {
    throw ConfigError("infeasible split: " + std::to_string(test) + " test items out of " + std::to_string(n));
  }
  return test;
}

}  // namespace

std::string_view class_name(ClassLabel label) { return kClassNames[class_code(label)]; }

std::string_view class_name(std::size_t code) {
  if (code >= kClassCount) throw LabelError("class code " + std::to_string(code) + " out of range");
  return kClassNames[code];
}

std::optional<ClassLabel> parse_class_label(std::string_view name) {
  for (std::size_t i = 0; i < kClassCount; ++i) {
    if (kClassNames[i] == name) return static_cast<ClassLabel>(i);
  }
  return std::nullopt;
}

std::array<std::size_t, kClassCount> count_classes(std::span<const Sample> samples) {
  std::array<std::size_t, kClassCount> counts{};
  for (const auto& s : samples) ++counts[class_code(s.label)];
  return counts;
}

Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir, bool check_files) {
  Manifest m;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);  // UTF-8 BOM
    const auto stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto fields = parse_csv_line(stripped, line_no);
    if (!header_seen) {
      if (fields.size() != 2 || fields[0] != "path" || fields[1] != "label") {
        throw ParseError(line_no, "manifest header must be 'path,label'");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 2) throw ParseError(line_no, "expected 2 fields, got " + std::to_string(fields.size()));
    if (fields[0].empty()) throw ParseError(line_no, "empty path");
    const auto label = parse_class_label(fields[1]);
    if (!label) throw LabelError("line " + std::to_string(line_no) + ": unknown label '" + fields[1] + "'");
    std::filesystem::path p(fields[0]);
    if (p.is_relative()) p = base_dir / p;
    if (check_files && !std::filesystem::exists(p)) {
      ++m.missing_files;
      m.missing_paths.push_back(p.string());
      continue;
    }
    m.samples.push_back({p.lexically_normal().string(), *label});
  }
  if (!header_seen) throw ParseError(line_no, "manifest is missing the 'path,label' header");
  m.class_counts = count_classes(m.samples);
  return m;
}

Manifest load_manifest(const std::filesystem::path& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str(), path.parent_path(), check_files);
}

void write_manifest(const std::filesystem::path& path, std::span<const Sample> samples) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const auto base = std::filesystem::absolute(path).parent_path();
  out << "path,label\n";
  for (const auto& s : samples) {
    std::filesystem::path p(s.path);
    std::string shown = s.path;
    if (p.is_absolute() || std::filesystem::exists(p)) {
      const auto rel = std::filesystem::absolute(p).lexically_relative(base);
      if (!rel.empty()) shown = rel.string();
    }
    out << csv_field(shown) << ',' << class_name(s.label) << '\n';
  }
}

SplitIndices split_indices(std::size_t n, const SplitSpec& spec, std::span<const std::size_t> labels) {
  check_split_spec(spec);
  if (n == 0) throw ConfigError("cannot split an empty dataset");
  const std::size_t test_total = test_size_for(n, spec);
  SplitIndices out;
  auto rng = make_rng(spec.seed, "split");

  if (!spec.stratified) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    shuffle(std::span(perm), rng);
    out.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(test_total));
    out.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(test_total), perm.end());
    return out;
  }

  if (labels.size() != n) throw ConfigError("stratified split needs one label per item");
  std::size_t classes = 0;
  for (auto l : labels) classes = std::max(classes, l + 1);
  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(i);

  // Largest-remainder allocation of the test quota, ties to the lower class.
  std::vector<std::size_t> quota(classes);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    const double exact = static_cast<double>(test_total) * static_cast<double>(members[c].size()) / static_cast<double>(n);
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    remainders.emplace_back(exact - std::floor(exact), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < test_total; ++i, ++assigned) ++quota[remainders[i % classes].second];

  for (std::size_t c = 0; c < classes; ++c) {
    auto& m = members[c];
    shuffle(std::span(m), rng);
    const auto q = std::min(quota[c], m.size());
    out.test.insert(out.test.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(q));
    out.train.insert(out.train.end(), m.begin() + static_cast<std::ptrdiff_t>(q), m.end());
  }
  shuffle(std::span(out.test), rng);
  shuffle(std::span(out.train), rng);
  return out;
}

std::pair<std::vector<Sample>, std::vector<Sample>> split_dataset(std::span<const Sample> samples,
                                                                  const SplitSpec& spec) {
  std::vector<std::size_t> labels;
  for (const auto& s : samples) labels.push_back(class_code(s.label));
  return split_dataset(samples, split_indices(samples.size(), spec, labels));
}

std::vector<std::size_t> labels_of(std::span<const Example> examples) {
  std::vector<std::size_t> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(e.label);
  return out;
}

}  // namespace disasterlens
