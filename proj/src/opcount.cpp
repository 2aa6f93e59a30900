#include "lwnd/opcount.hpp"

#include <cstdio>
#include <sstream>

#include "lwnd/errors.hpp"

namespace lwnd::opcount {

namespace {

constexpr Component kComponents[] = {Component::Conv0, Component::Residual, Component::Head, Component::Output};

CountReport empty_report() {
  CountReport r;
  for (Component c : kComponents) r.components.push_back({c, {}});
  return r;
}

void add_to(CountReport& r, Component c, const OpCounts& counts) {
  r.components[static_cast<std::size_t>(c)].counts += counts;
  r.total += counts;
}

}  // namespace

std::string component_name(Component c) {
  switch (c) {
    case Component::Conv0: return "conv0";
    case Component::Residual: return "residual";
    case Component::Head: return "head";
    case Component::Output: return "output";
  }
  return "?";
}

OpCounts count_dense_layer(const LayerShape& s) {
  if (s.D < 1 || s.in_ch < 0 || s.out_ch < 0 || s.kernel < 1) throw ValidationError("count_dense_layer: bad shape");
  const long weights = static_cast<long>(s.in_ch) * s.kernel * s.kernel * s.out_ch;
  OpCounts c;
  c.mults = weights * s.D;
  c.adds = (weights - s.out_ch) * s.D;
  return c;
}

OpCounts count_lightweight_layer(std::span<const int> nonzeros, long D, bool count_dead) {
  if (D < 1) throw ValidationError("count_lightweight_layer: D must be positive");
  OpCounts c;
  for (int nnz : nonzeros) {
    if (nnz < 0) throw ValidationError("count_lightweight_layer: negative nonzero count");
    c.bools += static_cast<long>(nnz) * D;
    if (nnz > 0) {
      c.adds += static_cast<long>(nnz - 1) * D;
      c.indicators += D;
    } else if (count_dead) {
      c.indicators += D;
    }
  }
  return c;
}

OpCounts count_lightweight_layer(std::span<const lowering::ChannelProgram> channels, long D, bool count_dead) {
  std::vector<int> nnz;
  for (const auto& cp : channels) nnz.push_back(cp.pn.fan_in());
  return count_lightweight_layer(nnz, D, count_dead);
}

std::vector<LayerShape> layer_shapes(const ModelConfig& config) {
  config.validate();
  const long D = config.spatial();
  std::vector<LayerShape> s;
  s.push_back({lsq::LayerKind::Conv, ModelConfig::kInputChannels, config.channels, 1, D, Component::Conv0});
  for (int b = 0; b < 2 * config.residual_blocks; ++b)
    s.push_back({lsq::LayerKind::Conv, config.channels, config.channels, 3, D, Component::Residual});
  int in = config.flatten_width();
  for (int width : config.dense_sizes) {
    s.push_back({lsq::LayerKind::Dense, in, width, 1, 1, Component::Head});
    in = width;
  }
  s.push_back({lsq::LayerKind::Dense, in, 2, 1, 1, Component::Output});
  return s;
}

std::vector<LayerShape> layer_shapes(const lowering::BooleanProgram& program) {
  std::vector<LayerShape> s;
  const long D = static_cast<long>(program.height()) * program.width();
  bool first_conv = true;
  for (const auto& L : program.layers) {
    switch (L.type) {
      case lowering::LayerType::Conv:
        s.push_back({lsq::LayerKind::Conv, L.in_channels, L.out_channels(), L.kernel, D,
                     first_conv ? Component::Conv0 : Component::Residual});
        first_conv = false;
        break;
      case lowering::LayerType::Dense:
        s.push_back({lsq::LayerKind::Dense, L.in_channels, L.out_channels(), 1, 1, Component::Head});
        break;
      case lowering::LayerType::Output:
        s.push_back({lsq::LayerKind::Dense, L.in_channels, 2, 1, 1, Component::Output});
        break;
    }
  }
  return s;
}

CountReport count_dense(std::span<const LayerShape> shapes) {
  CountReport r = empty_report();
  for (const auto& s : shapes) add_to(r, s.component, count_dense_layer(s));
  return r;
}

CountReport count_dense(const ModelConfig& config) {
  const auto shapes = layer_shapes(config);
  return count_dense(shapes);
}

CountReport count_lightweight(std::span<const LayerSparsity> layers, const CountOptions& options) {
  CountReport r = empty_report();
  for (const auto& l : layers) {
    OpCounts c = count_lightweight_layer(l.nonzeros, l.D, options.count_dead_indicators && l.component == Component::Head);
    c.adds += l.extra_adds;
    if (l.indicators >= 0) c.indicators = l.indicators;
    add_to(r, l.component, c);
  }
  return r;
}

std::vector<LayerSparsity> sparsity_profile(const lowering::BooleanProgram& program) {
  const auto shapes = layer_shapes(program);
  std::vector<LayerSparsity> out;
  for (std::size_t i = 0; i < program.layers.size(); ++i) {
    const auto& L = program.layers[i];
    LayerSparsity s;
    s.component = shapes[i].component;
    s.D = shapes[i].D;
    for (const auto& cp : L.channels) s.nonzeros.push_back(cp.pn.fan_in());
    if (L.type == lowering::LayerType::Output && !L.folded) {
      s.extra_adds = 1;  // S_real - S_random
      s.indicators = 1;
    }
    out.push_back(std::move(s));
  }
  return out;
}

CountReport count_lightweight(const lowering::BooleanProgram& program, const CountOptions& options) {
  const auto profile = sparsity_profile(program);
  return count_lightweight(profile, options);
}

std::vector<LayerSparsity> reference_sparsity_fixture() {
  constexpr long D = 16 * 8;
  auto spread = [](int channels, int live, int total) {
    std::vector<int> v(static_cast<std::size_t>(channels), 0);
    for (int c = 0; c < live; ++c) v[static_cast<std::size_t>(c)] = total / live + (c < total % live ? 1 : 0);
    return v;
  };
  std::vector<LayerSparsity> f;
  // conv0: channels 1, 15, 24 and 25 carry two nonzeros each.
  std::vector<int> conv0(32, 0);
  for (int c : {1, 15, 24, 25}) conv0[static_cast<std::size_t>(c)] = 2;
  f.push_back({Component::Conv0, D, conv0});
  f.push_back({Component::Residual, D, spread(32, 32, 671)});
  f.push_back({Component::Residual, D, spread(32, 32, 2081)});
  // 99 of the 128 head neurons are live.
  f.push_back({Component::Head, 1, spread(64, 64, 13000)});
  f.push_back({Component::Head, 1, spread(64, 35, 877)});
  f.push_back({Component::Output, 1, {64}});
  return f;
}

double ratio(const CountReport& lightweight, const CountReport& dense) {
  if (dense.total.total() == 0) throw ValidationError("ratio: dense model has no operations");
  return static_cast<double>(lightweight.total.total()) / static_cast<double>(dense.total.total());
}

std::string format_table(const CountReport& dense, const CountReport& lightweight) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %12s %12s | %10s %10s %10s\n", "component", "mults", "adds", "bools", "adds",
                "indicators");
  os << line;
  auto row = [&](const std::string& name, const OpCounts& d, const OpCounts& l) {
    std::snprintf(line, sizeof line, "%-10s %12ld %12ld | %10ld %10ld %10ld\n", name.c_str(), d.mults, d.adds, l.bools,
                  l.adds, l.indicators);
    os << line;
  };
  for (std::size_t i = 0; i < dense.components.size(); ++i)
    row(component_name(dense.components[i].component), dense.components[i].counts, lightweight.components[i].counts);
  row("total", dense.total, lightweight.total);
  std::snprintf(line, sizeof line, "dense ops %ld, lightweight ops %ld, ratio %.4f\n", dense.total.total(),
                lightweight.total.total(), ratio(lightweight, dense));
  os << line;
  return os.str();
}

std::string format_csv(const CountReport& dense, const CountReport& lightweight) {
  std::ostringstream os;
  os << "component,mults,adds,bools,indicators\n";
  auto rows = [&os](const std::string& prefix, const CountReport& r) {
    for (const auto& c : r.components)
      os << prefix << component_name(c.component) << ',' << c.counts.mults << ',' << c.counts.adds << ','
         << c.counts.bools << ',' << c.counts.indicators << '\n';
    os << prefix << "total," << r.total.mults << ',' << r.total.adds << ',' << r.total.bools << ','
       << r.total.indicators << '\n';
  };
  rows("dense/", dense);
  rows("lightweight/", lightweight);
  return os.str();
}

}  // namespace lwnd::opcount
