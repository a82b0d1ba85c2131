#include "gsj/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"

#include "gsj/errors.hpp"

namespace gsj {

using nlohmann::json;

IgmResult compute_igm_from(const FlowBlock& block, const Tensor3& x_star, const Tensor3& z,
                           const Tensor3& x0, NormKind kind) {
  if (!x_star.same_shape(z) || !x0.same_shape(z))
    throw DimensionError("compute_igm: x_star, z and x0 must share a shape");
  IgmResult res;
  AffineParams su;
  try {
    su = eval_su(block, x0);
  } catch (const OverflowError& e) {
    res.value = std::numeric_limits<double>::infinity();
    res.overflow = res.pathological = true;
    res.max_abs = e.max_abs();
    return res;
  }
  Tensor3 resid(z.batch(), z.seq(), z.channels());
  auto rd = resid.data();
  auto sd = su.s.data();
  auto ud = su.u.data();
  auto zd = z.data();
  auto xd = x_star.data();
  for (std::size_t i = 0; i < rd.size(); ++i) {
    const double first = std::exp(sd[i]) * zd[i] + ud[i];
    if (!std::isfinite(first)) {
      res.overflow = true;
    } else {
      res.max_abs = std::max(res.max_abs, std::abs(first));
    }
    rd[i] = first - xd[i];
  }
  if (res.overflow) {
    res.value = std::numeric_limits<double>::infinity();
    res.pathological = true;
    return res;
  }
  res.value = matrix_norm(batch_mean(resid), kind);
  res.pathological = !(res.value <= kIgmPathological);
  return res;
}

IgmResult compute_igm(const FlowBlock& block, const Tensor3& x_star, const Tensor3& z,
                      InitMode init, NormKind kind) {
  return compute_igm_from(block, x_star, z, initial_guess(z, init), kind);
}

CrmResult compute_crm(const FlowBlock& block, const Tensor3& x_star, NormKind kind) {
  const auto su = eval_su(block, x_star);
  Tensor3 nvp(x_star.batch(), x_star.seq(), x_star.channels());
  auto nd = nvp.data();
  auto sd = su.s.data();
  auto xd = x_star.data();
  for (std::size_t i = 0; i < nd.size(); ++i) nd[i] = std::exp(-sd[i]) * xd[i];
  if (!all_finite(nd)) throw OverflowError("Sigma^{-1}(X) X is not finite", max_abs(nd));
  CrmResult r;
  r.parts.nvp = matrix_norm(batch_mean(nvp), kind);
  r.parts.ws = matrix_norm(block.w_s, kind);
  r.parts.wu = matrix_norm(block.w_u, kind);
  r.crm = r.parts.nvp * r.parts.ws + r.parts.wu;
  return r;
}

namespace {

double median(std::vector<double> v) {
  std::ranges::sort(v);
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

StackSelection select_stack(std::span<const double> crms, double dominance_ratio) {
  if (!(dominance_ratio > 1.0)) throw std::invalid_argument("dominance ratio must be > 1");
  StackSelection sel;
  sel.dominance_ratio = dominance_ratio;
  std::vector<std::size_t> remaining(crms.size());
  std::iota(remaining.begin(), remaining.end(), std::size_t{0});
  while (!remaining.empty()) {
    std::vector<double> vals;
    std::size_t best = 0;
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      vals.push_back(crms[remaining[i]]);
      if (crms[remaining[i]] > crms[remaining[best]]) best = i;
    }
    const double top = crms[remaining[best]];
    if (!(top > 0.0) || top < dominance_ratio * median(std::move(vals))) break;
    sel.blocks.push_back(remaining[best]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
  }
  return sel;
}

std::vector<InitMode> MetricReport::inits() const {
  std::vector<InitMode> out;
  for (const auto& b : blocks) out.push_back(b.chosen_init);
  return out;
}

std::vector<double> MetricReport::crms() const {
  std::vector<double> out;
  for (const auto& b : blocks) out.push_back(b.crm);
  return out;
}

namespace {

std::vector<std::size_t> order_of(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::ranges::stable_sort(idx, [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  return idx;
}

}  // namespace

bool MetricReport::crm_rank_agrees(NormKind kind) const {
  std::vector<double> primary, other;
  for (const auto& b : blocks) {
    primary.push_back(b.crm);
    other.push_back(b.variants[static_cast<std::size_t>(kind)].crm);
  }
  return order_of(primary) == order_of(other);
}

Tensor3 synthetic_data_batch(const FlowModel& model, std::uint64_t seed, std::size_t batch) {
  return inverse_model_serial(
      model, standard_normal(seed, batch, model.config.seq_len, model.config.channels));
}

MetricReport metric_pass(const FlowModel& model, const Tensor3& x_star_batch,
                         const MetricOptions& opts) {
  if (x_star_batch.channels() != model.channels())
    throw DimensionError("metric batch channels differ from model");
  MetricReport rep;
  rep.norm = opts.norm;
  Tensor3 cur = x_star_batch;
  constexpr std::array kinds{NormKind::Spectral, NormKind::Frobenius, NormKind::One};
  for (std::size_t l = 0; l < model.blocks.size(); ++l) {
    const FlowBlock& blk = model.blocks[l];
    try {
      const Tensor3 xb = blk.flip ? reverse_sequence(cur) : cur;
      const Tensor3 zb = forward_block(blk, xb);
      BlockMetrics m;
      for (NormKind k : kinds) {
        auto& v = m.variants[static_cast<std::size_t>(k)];
        const IgmResult iz = compute_igm(blk, xb, zb, InitMode::FromZ, k);
        const IgmResult iz0 = compute_igm(blk, xb, zb, InitMode::FromZ0, k);
        const CrmResult c = compute_crm(blk, xb, k);
        v = {iz.value, iz0.value, c.crm};
        if (k == opts.norm) {
          m.igm_z = iz;
          m.igm_z0 = iz0;
          m.crm = c.crm;
          m.parts = c.parts;
        }
      }
      m.chosen_init = m.igm_z.value <= m.igm_z0.value ? InitMode::FromZ : InitMode::FromZ0;
      rep.blocks.push_back(m);
      cur = blk.flip ? reverse_sequence(zb) : zb;
    } catch (const OverflowError& e) {
      throw e.with_block(l);
    }
  }
  double total = 0.0;
  for (const auto& b : rep.blocks) total += b.crm;
  for (auto& b : rep.blocks) b.crm_percent = total > 0.0 ? 100.0 * b.crm / total : 0.0;
  rep.stack = select_stack(rep.crms(), opts.dominance_ratio);
  return rep;
}

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_inf(const json& j, const char* key) {
  if (!j.contains(key)) throw MalformedFileError(std::string("metric report: missing '") + key + "'");
  const json& v = j.at(key);
  if (v.is_null()) return std::numeric_limits<double>::infinity();
  if (!v.is_number()) throw MalformedFileError(std::string("metric report: '") + key + "' is not a number");
  return v.get<double>();
}

}  // namespace

std::string metric_report_to_json(const MetricReport& r) {
  constexpr std::array kinds{NormKind::Spectral, NormKind::Frobenius, NormKind::One};
  json blocks = json::array();
  for (const auto& b : r.blocks) {
    json variants;
    for (NormKind k : kinds) {
      const auto& v = b.variants[static_cast<std::size_t>(k)];
      variants[std::string(to_string(k))] = {{"igm_z", finite_or_null(v.igm_z)},
                                             {"igm_z0", finite_or_null(v.igm_z0)},
                                             {"crm", v.crm}};
    }
    blocks.push_back({{"igm_z", finite_or_null(b.igm_z.value)},
                      {"igm_z0", finite_or_null(b.igm_z0.value)},
                      {"igm_z_pathological", b.igm_z.pathological},
                      {"igm_z0_pathological", b.igm_z0.pathological},
                      {"igm_z_max_abs", b.igm_z.max_abs},
                      {"igm_z0_max_abs", b.igm_z0.max_abs},
                      {"init", std::string(to_string(b.chosen_init))},
                      {"crm", b.crm},
                      {"nvp", b.parts.nvp},
                      {"ws", b.parts.ws},
                      {"wu", b.parts.wu},
                      {"percent", b.crm_percent},
                      {"variants", std::move(variants)}});
  }
  json doc;
  doc["norm"] = std::string(to_string(r.norm));
  doc["blocks"] = std::move(blocks);
  doc["stack"] = r.stack.blocks;
  doc["dominance_ratio"] = r.stack.dominance_ratio;
  doc["variant_rank_agreement"] = {{"frobenius", r.crm_rank_agrees(NormKind::Frobenius)},
                                   {"one", r.crm_rank_agrees(NormKind::One)}};
  return doc.dump(2);
}

MetricReport metric_report_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw MalformedFileError(std::string("metric report is not valid JSON: ") + e.what());
  }
  try {
    MetricReport r;
    r.norm = parse_norm_kind(doc.at("norm").get<std::string>());
    for (const json& jb : doc.at("blocks")) {
      BlockMetrics b;
      b.igm_z.value = number_or_inf(jb, "igm_z");
      b.igm_z0.value = number_or_inf(jb, "igm_z0");
      b.igm_z.pathological = jb.at("igm_z_pathological").get<bool>();
      b.igm_z0.pathological = jb.at("igm_z0_pathological").get<bool>();
      b.igm_z.overflow = !std::isfinite(b.igm_z.value);
      b.igm_z0.overflow = !std::isfinite(b.igm_z0.value);
      b.igm_z.max_abs = jb.at("igm_z_max_abs").get<double>();
      b.igm_z0.max_abs = jb.at("igm_z0_max_abs").get<double>();
      const auto init = jb.at("init").get<std::string>();
      if (init != "Z" && init != "Z0") throw MalformedFileError("metric report: bad init '" + init + "'");
      b.chosen_init = init == "Z" ? InitMode::FromZ : InitMode::FromZ0;
      b.crm = jb.at("crm").get<double>();
      b.parts = {jb.at("nvp").get<double>(), jb.at("ws").get<double>(), jb.at("wu").get<double>()};
      b.crm_percent = jb.at("percent").get<double>();
      for (NormKind k : {NormKind::Spectral, NormKind::Frobenius, NormKind::One}) {
        const json& v = jb.at("variants").at(std::string(to_string(k)));
        b.variants[static_cast<std::size_t>(k)] = {number_or_inf(v, "igm_z"),
                                                   number_or_inf(v, "igm_z0"),
                                                   v.at("crm").get<double>()};
      }
      r.blocks.push_back(b);
    }
    r.stack.blocks = doc.at("stack").get<std::vector<std::size_t>>();
    r.stack.dominance_ratio = doc.at("dominance_ratio").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw MalformedFileError(std::string("metric report: ") + e.what());
  }
}

ModelSampleResult sample_model(const FlowModel& model, const Tensor3& z, const Strategy& strategy,
                               const MetricReport& metrics, const ModelSampleOptions& opts) {
  const auto inits = metrics.inits();
  return sample_model(model, z, strategy, inits, opts);
}

}  // namespace gsj
