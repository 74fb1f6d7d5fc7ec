#include "dsgd/detector.hpp"

#include <algorithm>
#include <cmath>

#include "dsgd/error.hpp"

namespace dsgd {

DetectorConfig DetectorConfig::desk() { return {}; }

DetectorConfig DetectorConfig::lite() {
  DetectorConfig c;
  c.backbone = BackboneConfig::lite();
  c.rgn.srn_channels = 256;
  c.rgn.mask_channels = 256;
  c.pgn_decoder_channels = 64;
  return c;
}

void DetectorConfig::validate() const {
  backbone.validate();
  rgn.validate();
  if (pgn_decoder_channels < 1) throw ConfigError("pgn_decoder_channels must be >= 1");
}

void to_json(nlohmann::json& j, const DetectorConfig& c) {
  const auto& b = c.backbone;
  j = nlohmann::json{{"growth_rate", b.growth_rate},
                     {"block_layers", b.block_layers},
                     {"rgn_layers", b.rgn_layers},
                     {"ggn_layers", b.ggn_layers},
                     {"gen_layers", b.gen_layers},
                     {"pgn_layers", b.pgn_layers},
                     {"stem_channels", b.stem_channels},
                     {"bottleneck_factor", b.bottleneck_factor},
                     {"compression", b.compression},
                     {"anchor_scales", c.rgn.anchor_scales},
                     {"anchor_ratios", c.rgn.anchor_ratios},
                     {"nms_iou", c.rgn.nms_iou},
                     {"top_k", c.rgn.top_k},
                     {"anchor_batch", c.rgn.anchor_batch},
                     {"region_batch", c.rgn.region_batch},
                     {"srn_channels", c.rgn.srn_channels},
                     {"mask_channels", c.rgn.mask_channels},
                     {"roi_size", c.rgn.roi_size},
                     {"pgn_decoder_channels", c.pgn_decoder_channels}};
}

void from_json(const nlohmann::json& j, DetectorConfig& c) {
  auto& b = c.backbone;
  j.at("growth_rate").get_to(b.growth_rate);
  j.at("block_layers").get_to(b.block_layers);
  j.at("rgn_layers").get_to(b.rgn_layers);
  j.at("ggn_layers").get_to(b.ggn_layers);
  j.at("gen_layers").get_to(b.gen_layers);
  j.at("pgn_layers").get_to(b.pgn_layers);
  j.at("stem_channels").get_to(b.stem_channels);
  j.at("bottleneck_factor").get_to(b.bottleneck_factor);
  j.at("compression").get_to(b.compression);
  j.at("anchor_scales").get_to(c.rgn.anchor_scales);
  j.at("anchor_ratios").get_to(c.rgn.anchor_ratios);
  j.at("nms_iou").get_to(c.rgn.nms_iou);
  j.at("top_k").get_to(c.rgn.top_k);
  j.at("anchor_batch").get_to(c.rgn.anchor_batch);
  j.at("region_batch").get_to(c.rgn.region_batch);
  j.at("srn_channels").get_to(c.rgn.srn_channels);
  j.at("mask_channels").get_to(c.rgn.mask_channels);
  j.at("roi_size").get_to(c.rgn.roi_size);
  j.at("pgn_decoder_channels").get_to(c.pgn_decoder_channels);
}

Detector::Detector(const DetectorConfig& config) : config_(config) {
  config_.validate();
  backbone = Backbone(config_.backbone);
  ggpn = Ggpn(config_.backbone);
  gen = Gen(config_.backbone);
  srn = Srn(config_.backbone.output_channels(), config_.rgn);
  rgpn = Rgpn(config_.backbone.output_channels(), config_.backbone, config_.rgn);
  pgn = Pgn(config_.backbone, config_.pgn_decoder_channels);
  init(0.01, 0);
}

nn::ParamSet Detector::params(std::initializer_list<Part> parts) {
  nn::ParamSet ps;
  for (Part p : parts) switch (p) {
      case Part::Backbone: backbone.collect(ps, "backbone"); break;
      case Part::Ggpn: ggpn.collect(ps, "ggpn"); break;
      case Part::Gen: gen.collect(ps, "gen"); break;
      case Part::Srn: srn.collect(ps, "srn"); break;
      case Part::Rgpn: rgpn.collect(ps, "rgpn"); break;
      case Part::Pgn: pgn.collect(ps, "pgn"); break;
    }
  return ps;
}

nn::ParamSet Detector::all_params() {
  return params({Part::Backbone, Part::Ggpn, Part::Gen, Part::Srn, Part::Rgpn, Part::Pgn});
}

void Detector::init(double head_std, std::uint64_t seed) {
  nn::init_weights(all_params(), {head_std, seed});
}

std::vector<Detection> Detector::detect(std::span<const Image* const> images, bool keep_maps) {
  ag::NoGradGuard no_grad;
  const int n = static_cast<int>(images.size());
  const int W = images[0]->width, H = images[0]->height;
  auto trunk = backbone.forward(ag::constant(image_batch(images)), false);
  std::vector<Detection> out(n);

  const auto g = ggpn.forward(trunk.features, false);
  for (int i = 0; i < n; ++i) {
    std::span<const float> reg(g.reg->value.data() + 4 * i, 4);
    std::span<const float> th(g.theta->value.data() + kAngleBins * i, kAngleBins);
    out[i].ggn = decode_global(reg, th, W, H);
    out[i].ggn.rho = score_grasps(*images[i], std::span<const GraspRect>(&out[i].ggn, 1)).front();
  }

  const ag::Var raw = pgn.forward(trunk, false);
  for (int i = 0; i < n; ++i) {
    PixelGraspMaps maps = pixel_maps(raw->value, i);
    for (const auto& p : pgn_decode(maps)) out[i].pgn.push_back(p.rect);
    if (keep_maps) out[i].maps = std::move(maps);
  }

  const auto s = srn.forward(trunk.features);
  const auto anchors = make_anchors(trunk.features->value.dim(2), trunk.features->value.dim(3), W, H,
                                    config_.rgn);
  std::vector<ag::RoiBox> rois;
  std::vector<std::pair<int, std::pair<Box, double>>> owners;
  for (int i = 0; i < n; ++i)
    for (const auto& prop : srn_proposals(s, i, anchors, W, H, config_.rgn, config_.rgn.top_k)) {
      rois.push_back(to_feature_roi(prop.first, i));
      owners.emplace_back(i, prop);
    }
  if (!rois.empty()) {
    const auto r = rgpn.forward(roi_pool(trunk.features, rois, config_.rgn.roi_size), false);
    for (std::size_t k = 0; k < rois.size(); ++k) {
      const Box& region = owners[k].second.first;
      std::span<const float> reg(r.reg->value.data() + k * kRegionClasses * 4 + 4, 4);
      std::span<const float> th(r.theta->value.data() + k * kRegionClasses * kAngleBins + kAngleBins,
                                kAngleBins);
      std::span<const float> rho(r.rho->value.data() + k * kRegionClasses, kRegionClasses);
      const int bin = static_cast<int>(std::max_element(th.begin(), th.end()) - th.begin());
      RegionGrasp rg;
      rg.region = region;
      rg.saliency = owners[k].second.second;
      rg.rect = decode_region(reg, region, bin);
      rg.rect.rho = gen_confidence(rho);
      const float* m = r.mask->value.data() + (k * kRegionClasses + 1) * kMaskCells;
      rg.mask.resize(kMaskCells);
      for (int c = 0; c < kMaskCells; ++c) rg.mask[c] = 1.0f / (1.0f + std::exp(-m[c]));
      out[owners[k].first].regions.push_back(std::move(rg));
    }
  }
  for (auto& d : out) {
    std::stable_sort(d.regions.begin(), d.regions.end(),
                     [](const RegionGrasp& a, const RegionGrasp& b) { return a.rect.rho > b.rect.rho; });
    for (const auto& rg : d.regions) d.rgn.push_back(rg.rect);
  }
  return out;
}

Detection Detector::detect(const Image& image, bool keep_maps) {
  const Image* p = &image;
  return std::move(detect(std::span<const Image* const>(&p, 1), keep_maps).front());
}

std::vector<double> Detector::score_grasps(const Image& image, std::span<const GraspRect> rects) {
  if (rects.empty()) return {};
  ag::NoGradGuard no_grad;
  std::vector<Image> gi;
  for (const auto& r : rects) gi.push_back(make_grasp_image(image, r));
  std::vector<const Image*> ptrs;
  for (const auto& im : gi) ptrs.push_back(&im);
  const ag::Var z = gen.forward(ag::constant(image_batch(ptrs)), false);
  std::vector<double> out;
  for (std::size_t i = 0; i < rects.size(); ++i)
    out.push_back(gen_confidence(std::span<const float>(z->value.data() + 2 * i, 2)));
  return out;
}

Archive Detector::to_archive() const {
  auto& self = const_cast<Detector&>(*this);
  const auto ps = self.all_params();
  Archive a;
  a.meta["config"] = config_;
  for (const auto& p : ps.params()) a.tensors.emplace_back(p.name, p.var->value);
  for (const auto& b : ps.buffers()) a.tensors.emplace_back(b.name, *b.tensor);
  return a;
}

void Detector::load_archive(const Archive& a) {
  const auto ps = all_params();
  auto fill = [&](const std::string& name, Tensor& dst) {
    const Tensor* src = a.find(name);
    if (!src) throw Error("checkpoint lacks tensor " + name);
    if (!src->same_shape(dst))
      throw Error("checkpoint tensor " + name + " has shape " + src->shape_string() + ", expected " +
                  dst.shape_string());
    dst = *src;
  };
  for (const auto& p : ps.params()) fill(p.name, p.var->value);
  for (const auto& b : ps.buffers()) fill(b.name, *b.tensor);
}

void Detector::save(const std::filesystem::path& path, const nlohmann::json& meta) const {
  Archive a = to_archive();
  if (meta.is_object())
    for (auto it = meta.begin(); it != meta.end(); ++it) a.meta[it.key()] = it.value();
  write_archive(path, a);
}

Detector Detector::load(const std::filesystem::path& path) {
  const Archive a = read_archive(path);
  if (!a.meta.contains("config")) throw Error(path.string() + ": checkpoint has no config");
  Detector d(a.meta.at("config").get<DetectorConfig>());
  d.load_archive(a);
  return d;
}

}  // namespace dsgd
