#include "lwnd/program_io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "lwnd/errors.hpp"

namespace lwnd::lowering {

namespace {

constexpr std::string_view kMagic = "BPROG v1";
constexpr std::string_view kWarningPrefix = "# warning: ";

std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

const char* type_name(LayerType t) {
  switch (t) {
    case LayerType::Conv: return "conv";
    case LayerType::Dense: return "dense";
    case LayerType::Output: return "output";
  }
  return "conv";
}

std::string layer_ref(int i, const char* none) {
  if (i == kFromInput) return "input";
  if (i == kNoSkip) return none;
  return std::to_string(i);
}

std::string index_list(const std::vector<InputIndex>& v, bool spatial) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i].channel);
    if (spatial) s += ':' + std::to_string(v[i].k1) + ':' + std::to_string(v[i].k2);
  }
  return s + "]";
}

class Parser {
 public:
  explicit Parser(std::string_view text) : in_(std::string(text)) {}

  BooleanProgram run() {
    BooleanProgram p;
    std::string line = next_line();

    if (line.rfind(kMagic, 0) != 0) fail("missing BPROG v1 header");
    auto head = fields(line.substr(kMagic.size()));
    const std::string layout = take(head, "layout");
    if (layout.rfind("4x16x", 0) != 0) fail("unsupported layout '" + layout + "'");
    p.group_size = to_int(layout.substr(5));
    const long n_layers = to_long(take(head, "layers"));
    if (n_layers < 1 || n_layers > 1'000'000) fail("bad layer count");

    line = next_line();
    for (long l = 0; l < n_layers; ++l) {
      std::istringstream ls(line);
      std::string tag, type;
      long index = -1;
      ls >> tag >> index >> type;
      if (tag != "LAYER" || index != l) fail("expected LAYER " + std::to_string(l));
      std::string rest;
      std::getline(ls, rest);
      auto f = fields(rest);
      LayerProgram L;
      if (type == "conv") {
        L.type = LayerType::Conv;
      } else if (type == "dense") {
        L.type = LayerType::Dense;
      } else if (type == "output") {
        L.type = LayerType::Output;
      } else {
        fail("unknown layer type '" + type + "'");
      }
      L.in_channels = to_int(take(f, "in"));
      const long out = to_long(take(f, "out"));
      if (out < 0 || out > 1'000'000) fail("bad channel count");
      L.source = to_ref(take(f, "src"));
      L.skip_source = to_ref(take(f, "skip"));
      if (L.type == LayerType::Conv) {
        L.kernel = to_int(take(f, "k"));
        L.padding = to_int(take(f, "pad"));
      }
      if (L.type == LayerType::Output) {
        L.folded = to_int(take(f, "folded")) != 0;
        L.pair_theta = to_long(take(f, "pair_theta"));
      }
      if (!f.empty()) fail("unexpected field '" + f.begin()->first + "'");
      for (long c = 0; c < out; ++c) L.channels.push_back(parse_channel(next_line(), c, L));
      p.layers.push_back(std::move(L));
      line = next_line();
    }

    if (line.rfind("SCORE", 0) != 0) fail("expected SCORE line");
    auto sf = fields(line.substr(5));
    p.score.delta = to_double(take(sf, "delta"));
    p.score.bias_diff = to_double(take(sf, "bias"));
    p.score.threshold = to_double(take(sf, "threshold"));

    if (next_line() != "EXPR") fail("expected EXPR section");
    for (line = next_line(); line != "END"; line = next_line()) {
      const auto eq = line.find(" = ");
      const auto dot = line.find('.');
      if (line.empty() || line[0] != 'L' || eq == std::string::npos || dot == std::string::npos || dot > eq)
        fail("malformed expression line");
      ExpressionEntry e;
      e.layer = to_int(line.substr(1, dot - 1));
      e.channel = to_int(line.substr(dot + 1, eq - dot - 1));
      e.formula = line.substr(eq + 3);
      p.expressions.push_back(std::move(e));
    }
    validate_program(p);
    p.warnings = warnings_;
    return p;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw IoError("program: line " + std::to_string(line_no_) + ": " + what);
  }

  std::string next_line() {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.rfind(kWarningPrefix, 0) == 0) warnings_.push_back(line.substr(kWarningPrefix.size()));
      if (line.empty() || line[0] == '#') continue;
      return line;
    }
    ++line_no_;
    fail("unexpected end of file");
  }

  std::map<std::string, std::string> fields(const std::string& text) const {
    std::map<std::string, std::string> out;
    std::istringstream ss(text);
    std::string tok;
    while (ss >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) fail("expected key=value, got '" + tok + "'");
      if (!out.emplace(tok.substr(0, eq), tok.substr(eq + 1)).second) fail("duplicate field '" + tok + "'");
    }
    return out;
  }

  std::string take(std::map<std::string, std::string>& f, const std::string& key) const {
    auto it = f.find(key);
    if (it == f.end()) fail("missing field '" + key + "'");
    std::string v = it->second;
    f.erase(it);
    return v;
  }

  long to_long(const std::string& s) const {
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0') fail("expected an integer, got '" + s + "'");
    return v;
  }

  int to_int(const std::string& s) const {
    const long v = to_long(s);
    if (v < -(1L << 30) || v > (1L << 30)) fail("integer out of range");
    return static_cast<int>(v);
  }

  double to_double(const std::string& s) const {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0') fail("expected a number, got '" + s + "'");
    return v;
  }

  int to_ref(const std::string& s) const {
    if (s == "input") return kFromInput;
    if (s == "none") return kNoSkip;
    return to_int(s);
  }

  std::vector<InputIndex> parse_list(const std::string& s, bool spatial) const {
    if (s.size() < 2 || s.front() != '[' || s.back() != ']') fail("malformed index list");
    std::vector<InputIndex> out;
    std::istringstream ss(s.substr(1, s.size() - 2));
    std::string item;
    while (std::getline(ss, item, ',')) {
      InputIndex i;
      if (spatial) {
        const auto a = item.find(':'), b = item.rfind(':');
        if (a == std::string::npos || a == b) fail("conv index must be c:k1:k2");
        i.channel = to_int(item.substr(0, a));
        i.k1 = to_int(item.substr(a + 1, b - a - 1));
        i.k2 = to_int(item.substr(b + 1));
      } else {
        i.channel = to_int(item);
      }
      out.push_back(i);
    }
    return out;
  }

  ChannelProgram parse_channel(const std::string& line, long channel, const LayerProgram& L) {
    if (line.rfind("IND ", 0) != 0) fail("expected IND line");
    auto f = fields(line.substr(4));
    if (to_long(take(f, "ch")) != channel) fail("channel lines out of order");
    ChannelProgram cp;
    cp.theta = to_long(take(f, "theta"));
    const long flip = to_long(take(f, "flip"));
    if (flip != 0 && flip != 1) fail("flip must be 0 or 1");
    cp.sign_flip = flip == 1;
    const bool spatial = L.type == LayerType::Conv;
    cp.pn.positive = parse_list(take(f, "P"), spatial);
    cp.pn.negative = parse_list(take(f, "N"), spatial);
    if (f.count("skip")) cp.skip_weight = to_long(take(f, "skip"));
    if (!f.empty()) fail("unexpected field '" + f.begin()->first + "'");
    return cp;
  }

  std::istringstream in_;
  long line_no_ = 0;
  std::vector<std::string> warnings_;
};

}  // namespace

std::string format_program(const BooleanProgram& p) {
  std::ostringstream os;
  os << kMagic << " layout=4x16x" << p.group_size << " layers=" << p.layers.size() << '\n';
  for (const auto& w : p.warnings) os << kWarningPrefix << w << '\n';
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const LayerProgram& L = p.layers[l];
    os << "LAYER " << l << ' ' << type_name(L.type) << " in=" << L.in_channels << " out=" << L.out_channels();
    if (L.type == LayerType::Conv) os << " k=" << L.kernel << " pad=" << L.padding;
    os << " src=" << layer_ref(L.source, "input") << " skip=" << layer_ref(L.skip_source, "none");
    if (L.type == LayerType::Output) os << " folded=" << (L.folded ? 1 : 0) << " pair_theta=" << L.pair_theta;
    os << '\n';
    const bool spatial = L.type == LayerType::Conv;
    for (std::size_t c = 0; c < L.channels.size(); ++c) {
      const ChannelProgram& cp = L.channels[c];
      os << "IND ch=" << c << " theta=" << cp.theta << " flip=" << (cp.sign_flip ? 1 : 0)
         << " P=" << index_list(cp.pn.positive, spatial) << " N=" << index_list(cp.pn.negative, spatial);
      if (L.skip_source != kNoSkip) os << " skip=" << cp.skip_weight;
      os << '\n';
    }
  }
  os << "SCORE delta=" << hexfloat(p.score.delta) << " bias=" << hexfloat(p.score.bias_diff)
     << " threshold=" << hexfloat(p.score.threshold) << '\n';
  os << "EXPR\n";
  for (const auto& e : p.expressions) os << 'L' << e.layer << '.' << e.channel << " = " << e.formula << '\n';
  os << "END\n";
  return os.str();
}

BooleanProgram parse_program(std::string_view text) { return Parser(text).run(); }

void write_program(const std::filesystem::path& path, const BooleanProgram& program) {
  const std::string text = format_program(program);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

BooleanProgram read_program(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  BooleanProgram p = parse_program(ss.str());
  return p;
}

bool is_program_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string head(kMagic.size(), '\0');
  return in.read(head.data(), static_cast<std::streamsize>(head.size())) && head == kMagic;
}

}  // namespace lwnd::lowering
