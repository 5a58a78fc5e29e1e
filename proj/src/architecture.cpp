#include "disasterlens/architecture.hpp"

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>

namespace disasterlens {

namespace {

std::string where(std::size_t index, const std::vector<std::size_t>& lines) {
  std::string s = "layer " + std::to_string(index);
  if (index < lines.size()) s += " (line " + std::to_string(lines[index]) + ")";
  return s;
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::vector<std::string> split_words(std::string_view line) {
  std::vector<std::string> words;
  std::istringstream in{std::string(line)};
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

std::size_t parse_count(const std::string& word, std::size_t line, bool allow_zero) {
  std::size_t value = 0;
  const auto* end = word.data() + word.size();
  const auto [ptr, ec] = std::from_chars(word.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ParseError(line, "expected a non-negative integer, got '" + word + "'");
  if (!allow_zero && value == 0) throw ParseError(line, "value must be positive");
  return value;
}

void expect_arity(const std::vector<std::string>& words, std::size_t n, std::size_t line) {
  if (words.size() != n) {
    throw ParseError(line, "'" + words[0] + "' takes " + std::to_string(n - 1) + " argument(s), got " +
                               std::to_string(words.size() - 1));
  }
}

}  // namespace

std::string param_name(std::size_t layer, std::string_view role) {
  return std::to_string(layer) + "." + std::string(role);
}

ArchitectureSpec::ArchitectureSpec(ActivationShape input, std::vector<Layer> layers,
                                   std::vector<std::size_t> lines)
    : input_(input), layers_(std::move(layers)) {
  if (input_.numel() == 0) throw ArchitectureError("input dimensions must be positive");
  bool flattened = false;
  bool seen_flatten = false;
  ActivationShape cur = input_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto at = where(i, lines);
    std::visit(
        Overloaded{
            [&](const ConvLayer& c) {
              if (flattened) throw ArchitectureError(at + ": conv after flatten");
              if (c.filters == 0 || c.kernel == 0 || c.stride == 0) {
                throw ArchitectureError(at + ": conv filters, kernel and stride must be positive");
              }
              try {
                const auto h = window_output_size(cur.height, c.kernel, c.stride, c.pad);
                const auto w = window_output_size(cur.width, c.kernel, c.stride, c.pad);
                params_.push_back({i, param_name(i, "kernels"), {c.filters, cur.channels, c.kernel, c.kernel}, true});
                params_.push_back({i, param_name(i, "bias"), {c.filters}, true});
                cur = {c.filters, h, w};
              } catch (const ShapeError& e) {
                throw ArchitectureError(at + ": conv does not chain: " + e.what());
              }
            },
            [&](const MaxPoolLayer& p) {
              if (flattened) throw ArchitectureError(at + ": maxpool after flatten");
              try {
                cur = {cur.channels, window_output_size(cur.height, p.window, p.stride, 0),
                       window_output_size(cur.width, p.window, p.stride, 0)};
              } catch (const ShapeError& e) {
                throw ArchitectureError(at + ": maxpool does not chain: " + e.what());
              }
            },
            [&](const FlattenLayer&) {
              if (seen_flatten) throw ArchitectureError(at + ": multiple flatten layers");
              seen_flatten = flattened = true;
              flatten_index_ = i;
              cur = {cur.numel(), 1, 1};
            },
            [&](const DenseLayer& d) {
              if (!flattened) throw ArchitectureError(at + ": dense before flatten");
              if (d.units == 0) throw ArchitectureError(at + ": dense units must be positive");
              params_.push_back({i, param_name(i, "weights"), {cur.channels, d.units}, false});
              params_.push_back({i, param_name(i, "bias"), {d.units}, false});
              cur = {d.units, 1, 1};
            },
        },
        layers_[i]);
    shapes_.push_back(cur);
  }
  if (!seen_flatten) throw ArchitectureError("architecture has no flatten layer");
  if (!std::holds_alternative<DenseLayer>(layers_.back())) {
    throw ArchitectureError("architecture must end with a dense layer");
  }
}

ActivationShape ArchitectureSpec::backbone_output() const {
  return flatten_index_ == 0 ? input_ : shapes_[flatten_index_ - 1];
}

std::vector<ParamSlot> ArchitectureSpec::backbone_params() const {
  std::vector<ParamSlot> out;
  for (const auto& p : params_)
    if (p.frozen) out.push_back(p);
  return out;
}

std::vector<ParamSlot> ArchitectureSpec::head_params() const {
  std::vector<ParamSlot> out;
  for (const auto& p : params_)
    if (!p.frozen) out.push_back(p);
  return out;
}

std::vector<std::size_t> ArchitectureSpec::dense_layer_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (std::holds_alternative<DenseLayer>(layers_[i])) out.push_back(i);
  return out;
}

std::string ArchitectureSpec::to_text() const {
  std::ostringstream out;
  out << "input " << input_.channels << ' ' << input_.height << ' ' << input_.width << '\n';
  for (const auto& layer : layers_) {
    std::visit(Overloaded{
                   [&](const ConvLayer& c) {
                     out << "conv " << c.filters << ' ' << c.kernel << ' ' << c.stride << ' ' << c.pad << ' '
                         << (c.activation == Activation::relu ? "relu" : "none") << '\n';
                   },
                   [&](const MaxPoolLayer& p) { out << "maxpool " << p.window << ' ' << p.stride << '\n'; },
                   [&](const FlattenLayer&) { out << "flatten\n"; },
                   [&](const DenseLayer& d) { out << "dense " << d.units << '\n'; },
               },
               layer);
  }
  return out.str();
}

ArchitectureSpec parse_arch(std::string_view text) {
  std::optional<ActivationShape> input;
  std::vector<Layer> layers;
  std::vector<std::size_t> lines;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto words = split_words(line);
    if (words.empty()) continue;
    const auto& kw = words[0];
    if (kw == "input") {
      expect_arity(words, 4, line_no);
      if (input) throw ParseError(line_no, "duplicate input line");
      if (!layers.empty()) throw ParseError(line_no, "input must precede all layers");
      input = ActivationShape{parse_count(words[1], line_no, false), parse_count(words[2], line_no, false),
                              parse_count(words[3], line_no, false)};
      continue;
    }
    if (!input) throw ParseError(line_no, "'" + kw + "' before the input line");
    if (kw == "conv") {
      expect_arity(words, 6, line_no);
      ConvLayer c{parse_count(words[1], line_no, false), parse_count(words[2], line_no, false),
                  parse_count(words[3], line_no, false), parse_count(words[4], line_no, true)};
      if (words[5] == "relu") {
        c.activation = Activation::relu;
      } else if (words[5] == "none") {
        c.activation = Activation::none;
      } else {
        throw ParseError(line_no, "activation must be relu or none, got '" + words[5] + "'");
      }
      layers.emplace_back(c);
    } else if (kw == "maxpool") {
      expect_arity(words, 3, line_no);
      layers.emplace_back(MaxPoolLayer{parse_count(words[1], line_no, false), parse_count(words[2], line_no, false)});
    } else if (kw == "flatten") {
      expect_arity(words, 1, line_no);
      layers.emplace_back(FlattenLayer{});
    } else if (kw == "dense") {
      expect_arity(words, 2, line_no);
      layers.emplace_back(DenseLayer{parse_count(words[1], line_no, false)});
    } else {
      throw ParseError(line_no, "unknown layer '" + kw + "'");
    }
    lines.push_back(line_no);
  }
  if (!input) throw ParseError(line_no, "missing input line");
  return ArchitectureSpec(*input, std::move(layers), std::move(lines));
}

ArchitectureSpec load_arch(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open architecture file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_arch(buf.str());
}

}  // namespace disasterlens
