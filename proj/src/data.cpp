// SPDX-License-Identifier: Apache-2.0

#include "oass/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "oass/common.hpp"
#include "oass/interp.hpp"
#include "oass/xml.hpp"

namespace oass {

const std::vector<std::string>& voc_class_names() {
  static const std::vector<std::string> names = {
      "aeroplane", "bicycle", "bird", "boat", "bottle",
      "bus", "car", "cat", "chair", "cow",
      "diningtable", "dog", "horse", "motorbike", "person",
      "pottedplant", "sheep", "sofa", "train", "tvmonitor"};
  return names;
}

namespace {

double parse_number(const XmlNode* node, const std::string& path) {
  if (!node) throw DataError("voc parse error: missing element " + path);
  std::string t = node->text;
  // trim
  size_t a = t.find_first_not_of(" \t\r\n");
  size_t b = t.find_last_not_of(" \t\r\n");
  if (a == std::string::npos)
    throw DataError("voc parse error at " + path + ": empty numeric field");
  t = t.substr(a, b - a + 1);
  try {
    size_t used = 0;
    double v = std::stod(t, &used);
    if (used != t.size())
      throw DataError("voc parse error at " + path + ": bad number '" + t + "'");
    return v;
  } catch (const std::invalid_argument&) {
    throw DataError("voc parse error at " + path + ": bad number '" + t + "'");
  }
}

std::string trimmed_text(const XmlNode* node) {
  if (!node) return "";
  std::string t = node->text;
  size_t a = t.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = t.find_last_not_of(" \t\r\n");
  return t.substr(a, b - a + 1);
}

// shortest round-trip double formatting
std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

VocAnnotation parse_voc_annotation(const std::string& xml_text,
                                   const std::vector<std::string>& class_names,
                                   bool include_difficult) {
  auto root = parse_xml(xml_text);
  if (root->name != "annotation")
    throw DataError("voc parse error at /" + root->name + ": expected <annotation> root");

  VocAnnotation ann;
  ann.filename = trimmed_text(root->child("filename"));

  const XmlNode* size = root->child("size");
  if (!size) throw DataError("voc parse error: missing element /annotation/size");
  ann.width = static_cast<int>(parse_number(size->child("width"), "/annotation/size/width"));
  ann.height = static_cast<int>(parse_number(size->child("height"), "/annotation/size/height"));
  if (ann.width <= 0 || ann.height <= 0)
    throw DataError("voc parse error at /annotation/size: non-positive dimensions");

  ann.labels.bits.assign(class_names.size(), 0);
  int obj_index = 0;
  for (const XmlNode* obj : root->children_named("object")) {
    ++obj_index;
    const std::string opath = strf("/annotation/object[%d]", obj_index);
    std::string name = trimmed_text(obj->child("name"));
    auto it = std::find(class_names.begin(), class_names.end(), name);
    if (it == class_names.end())
      throw DataError("voc parse error at " + opath + "/name: unknown class '" + name + "'");
    const int cls = static_cast<int>(it - class_names.begin());

    bool difficult = false;
    if (const XmlNode* d = obj->child("difficult"))
      difficult = trimmed_text(d) == "1";
    if (difficult && !include_difficult) continue;

    const XmlNode* bb = obj->child("bndbox");
    if (!bb) throw DataError("voc parse error at " + opath + ": missing <bndbox>");
    BBoxAnnotation box;
    box.class_id = cls;
    box.x_l = parse_number(bb->child("xmin"), opath + "/bndbox/xmin");
    box.y_l = parse_number(bb->child("ymin"), opath + "/bndbox/ymin");
    box.x_h = parse_number(bb->child("xmax"), opath + "/bndbox/xmax");
    box.y_h = parse_number(bb->child("ymax"), opath + "/bndbox/ymax");
    box.image_w = ann.width;
    box.image_h = ann.height;
    box.difficult = difficult;
    if (!(box.x_l < box.x_h) || !(box.y_l < box.y_h))
      throw DataError("voc parse error at " + opath + "/bndbox: inverted box bounds");
    ann.labels.bits[cls] = 1;
    ann.boxes.push_back(box);
  }
  return ann;
}

std::string serialize_voc_annotation(const VocAnnotation& ann,
                                     const std::vector<std::string>& class_names) {
  std::ostringstream os;
  os << "<annotation>\n";
  os << "  <filename>" << xml_escape(ann.filename) << "</filename>\n";
  os << "  <size>\n    <width>" << ann.width << "</width>\n    <height>"
     << ann.height << "</height>\n    <depth>3</depth>\n  </size>\n";
  for (const BBoxAnnotation& b : ann.boxes) {
    os << "  <object>\n"
       << "    <name>" << xml_escape(class_names.at(b.class_id)) << "</name>\n"
       << "    <difficult>" << (b.difficult ? 1 : 0) << "</difficult>\n"
       << "    <bndbox>\n"
       << "      <xmin>" << fmt_double(b.x_l) << "</xmin>\n"
       << "      <ymin>" << fmt_double(b.y_l) << "</ymin>\n"
       << "      <xmax>" << fmt_double(b.x_h) << "</xmax>\n"
       << "      <ymax>" << fmt_double(b.y_h) << "</ymax>\n"
       << "    </bndbox>\n"
       << "  </object>\n";
  }
  os << "</annotation>\n";
  return os.str();
}

// ---------------------------------------------------------------------------

double ShiftStats::cross_class_mean_abs_dx() const {
  double sum = 0.0;
  for (const auto& [cls, s] : per_class) sum += s.mean_abs_dx;
  return per_class.empty() ? 0.0 : sum / static_cast<double>(per_class.size());
}

ShiftStats shift_statistics(const std::vector<Sample>& samples, int target_size) {
  ShiftStats stats;
  stats.normalized_to = target_size;
  std::map<int, std::vector<std::pair<double, double>>> shifts;
  for (const Sample& s : samples) {
    for (const BBoxAnnotation& b : s.boxes) {
      require(b.image_w > 0 && b.image_h > 0, "shift_statistics: box without image dims");
      const double dx = (b.center_x() - 0.5 * b.image_w) * target_size / b.image_w;
      const double dy = (b.center_y() - 0.5 * b.image_h) * target_size / b.image_h;
      shifts[b.class_id].push_back({dx, dy});
    }
  }
  for (const auto& [cls, v] : shifts) {
    ClassShiftStats cs;
    cs.count = static_cast<long>(v.size());
    for (const auto& [dx, dy] : v) {
      cs.mean_dx += dx;
      cs.mean_dy += dy;
      cs.mean_abs_dx += std::abs(dx);
    }
    cs.mean_dx /= cs.count;
    cs.mean_dy /= cs.count;
    cs.mean_abs_dx /= cs.count;
    for (const auto& [dx, dy] : v) {
      cs.var_dx += (dx - cs.mean_dx) * (dx - cs.mean_dx);
      cs.var_dy += (dy - cs.mean_dy) * (dy - cs.mean_dy);
    }
    // population variance
    cs.var_dx /= cs.count;
    cs.var_dy /= cs.count;
    stats.per_class[cls] = cs;
  }
  return stats;
}

void write_shift_stats_csv(const ShiftStats& stats, const std::string& path,
                           const std::vector<std::string>& class_names) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path);
  os << "class_id,class_name,count,mean_dx,var_dx,mean_dy,var_dy,mean_abs_dx\n";
  for (const auto& [cls, s] : stats.per_class) {
    std::string name = cls < static_cast<int>(class_names.size())
                           ? class_names[cls]
                           : strf("class%d", cls);
    os << cls << "," << name << "," << s.count << "," << s.mean_dx << ","
       << s.var_dx << "," << s.mean_dy << "," << s.var_dy << ","
       << s.mean_abs_dx << "\n";
  }
}

// ---------------------------------------------------------------------------
// Augmentation

Sample flip_horizontal(const Sample& s) {
  Sample out = s;
  const int W = s.image.width();
  for (int ch = 0; ch < s.image.channels(); ++ch)
    for (int y = 0; y < s.image.height(); ++y) {
      const double* src = s.image.data.row(ch, y);
      double* dst = out.image.data.row(ch, y);
      for (int x = 0; x < W; ++x) dst[x] = src[W - 1 - x];
    }
  for (BBoxAnnotation& b : out.boxes) {
    const double xl = b.x_l, xh = b.x_h;
    b.x_l = W - xh;
    b.x_h = W - xl;
  }
  return out;
}

namespace {

Sample resize_sample(const Sample& s, int new_w, int new_h) {
  Sample out = s;
  out.image.data = resize(s.image.data, new_h, new_w, Interp::Bilinear);
  const double fx = static_cast<double>(new_w) / s.image.width();
  const double fy = static_cast<double>(new_h) / s.image.height();
  for (BBoxAnnotation& b : out.boxes) {
    b.x_l *= fx;
    b.x_h *= fx;
    b.y_l *= fy;
    b.y_h *= fy;
    b.image_w = new_w;
    b.image_h = new_h;
  }
  return out;
}

// Top-left anchored pad, center crop for sides beyond the canvas. Boxes that
// fall entirely outside the crop are dropped and labels are rebuilt, keeping
// the label/box consistency invariant.
Sample pad_or_crop(const Sample& s, int canvas) {
  const int W = s.image.width(), H = s.image.height();
  const int cx = W > canvas ? (W - canvas) / 2 : 0;
  const int cy = H > canvas ? (H - canvas) / 2 : 0;

  Sample out;
  out.id = s.id;
  out.image.data = Tensor(s.image.channels(), canvas, canvas);
  const int copy_w = std::min(W, canvas), copy_h = std::min(H, canvas);
  for (int ch = 0; ch < s.image.channels(); ++ch)
    for (int y = 0; y < copy_h; ++y) {
      const double* src = s.image.data.row(ch, y + cy) + cx;
      std::copy(src, src + copy_w, out.image.data.row(ch, y));
    }

  out.labels.bits.assign(s.labels.bits.size(), 0);
  for (BBoxAnnotation b : s.boxes) {
    b.x_l -= cx;
    b.x_h -= cx;
    b.y_l -= cy;
    b.y_h -= cy;
    b.x_l = std::max(b.x_l, 0.0);
    b.y_l = std::max(b.y_l, 0.0);
    b.x_h = std::min(b.x_h, static_cast<double>(canvas));
    b.y_h = std::min(b.y_h, static_cast<double>(canvas));
    if (b.x_l >= b.x_h || b.y_l >= b.y_h) continue;  // cropped away
    b.image_w = canvas;
    b.image_h = canvas;
    out.boxes.push_back(b);
    out.labels.bits[b.class_id] = 1;
  }
  // samples without boxes keep their labels as-is
  if (s.boxes.empty()) out.labels = s.labels;
  return out;
}

}  // namespace

Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng) {
  require(cfg.canvas % 2 == 0, "augment: canvas size must be even");
  const int target_long = rng.uniform_int(cfg.min_size, cfg.max_size);
  const bool flip = rng.bernoulli(cfg.flip_prob);

  const int W = s.image.width(), H = s.image.height();
  int new_w, new_h;
  if (W >= H) {
    new_w = target_long;
    new_h = std::max(1, static_cast<int>(std::lround(static_cast<double>(H) * target_long / W)));
  } else {
    new_h = target_long;
    new_w = std::max(1, static_cast<int>(std::lround(static_cast<double>(W) * target_long / H)));
  }
  Sample out = resize_sample(s, new_w, new_h);
  if (flip) out = flip_horizontal(out);
  return pad_or_crop(out, cfg.canvas);
}

// ---------------------------------------------------------------------------
// VOC directory layout

VocDataset load_voc_split(const std::string& root, const std::string& split) {
  VocDataset ds;
  ds.root = root;
  const std::string list_path = root + "/ImageSets/Main/" + split + ".txt";
  std::ifstream is(list_path);
  if (!is) throw DataError("cannot open split list " + list_path);
  std::string line;
  while (std::getline(is, line)) {
    size_t a = line.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) continue;
    size_t b = line.find_last_not_of(" \t\r\n");
    ds.ids.push_back(line.substr(a, b - a + 1));
  }
  if (ds.ids.empty()) throw DataError("empty split list " + list_path);
  return ds;
}

VocAnnotation load_voc_annotation_file(const std::string& root, const std::string& id,
                                       bool include_difficult) {
  const std::string path = root + "/Annotations/" + id + ".xml";
  std::ifstream is(path);
  if (!is) throw DataError("cannot open annotation " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_voc_annotation(ss.str(), voc_class_names(), include_difficult);
}

}  // namespace oass
