#include "mcscan/config.hpp"

#include "mcscan/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <type_traits>

#include <yaml-cpp/yaml.h>

namespace mcscan {

namespace {

RigidTransform from_rpy(const Vec3& translation, const Vec3& rpy_deg) {
  const Vec3 r = rpy_deg * kDegree;
  const RigidTransform rot = RigidTransform::rot_z(r.z()) * RigidTransform::rot_y(r.y()) * RigidTransform::rot_x(r.x());
  return {rot.rotation(), translation};
}

Vec3 read_vec3(const YAML::Node& n, const char* what) {
  if (!n.IsSequence() || n.size() != 3) throw Error(std::string("config: ") + what + " must be a 3-vector");
  return {n[0].as<double>(), n[1].as<double>(), n[2].as<double>()};
}

RigidTransform read_transform(const YAML::Node& n, const char* what) {
  if (n["matrix"]) {
    const YAML::Node m = n["matrix"];
    if (!m.IsSequence() || m.size() != 12) throw Error(std::string("config: ") + what + ".matrix needs 12 numbers");
    Mat4 h = Mat4::Identity();
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) h(r, c) = m[static_cast<std::size_t>(r * 4 + c)].as<double>();
    const RigidTransform t(h.topLeftCorner<3, 3>(), h.topRightCorner<3, 1>());
    if (!t.is_valid(1e-6)) throw Error(std::string("config: ") + what + " is not a rigid transform");
    // Exact matrices stay bit-identical so that dumps round-trip.
    return t.is_valid(1e-12) ? t : t.orthonormalized();
  }
  const Vec3 tr = n["translation"] ? read_vec3(n["translation"], what) : Vec3::Zero();
  const Vec3 rpy = n["rpy_deg"] ? read_vec3(n["rpy_deg"], what) : Vec3::Zero();
  return from_rpy(tr, rpy);
}

template <typename T>
void get(const YAML::Node& n, const char* key, T& out) {
  if (n && n[key]) out = n[key].as<T>();
}

StartCorner corner_from_name(const std::string& s) {
  if (s == "nearest_origin") return StartCorner::NearestOrigin;
  if (s == "min_x_min_y") return StartCorner::MinXMinY;
  if (s == "min_x_max_y") return StartCorner::MinXMaxY;
  if (s == "max_x_min_y") return StartCorner::MaxXMinY;
  if (s == "max_x_max_y") return StartCorner::MaxXMaxY;
  throw Error("config: unknown start corner '" + s + "'");
}

const char* corner_name(StartCorner c) {
  switch (c) {
    case StartCorner::NearestOrigin: return "nearest_origin";
    case StartCorner::MinXMinY: return "min_x_min_y";
    case StartCorner::MinXMaxY: return "min_x_max_y";
    case StartCorner::MaxXMinY: return "max_x_min_y";
    case StartCorner::MaxXMaxY: return "max_x_max_y";
  }
  return "nearest_origin";
}

CompensationMode mode_from_name(const std::string& s) {
  if (s == "single") return CompensationMode::SingleApplication;
  if (s == "as_printed") return CompensationMode::AsPrinted;
  throw Error("config: unknown compensation mode '" + s + "'");
}

void read_regime(const YAML::Node& n, Regime& r) {
  get(n, "name", r.name);
  get(n, "tracker_noise", r.tracker_noise);
  get(n, "outlier_rate", r.outlier_rate);
  get(n, "detection_probability", r.detection_probability);
  get(n, "marker_sigma_mm", r.marker_sigma_translation);
  if (n["marker_sigma_deg"]) r.marker_sigma_rotation = n["marker_sigma_deg"].as<double>() * kDegree;
  get(n, "speckle", r.speckle);
  get(n, "limited_robot", r.limited_robot);
}

void read_profile(const YAML::Node& n, MotionProfile& p) {
  get(n, "name", p.name);
  get(n, "tau", p.tau);
  get(n, "b", p.b);
  get(n, "z0", p.z0);
  get(n, "phi", p.phi);
  get(n, "axis", p.axis);
  get(n, "tracker_sigma", p.tracker_sigma);
  get(n, "learn_frames", p.learn_frames);
}

void read_phantom(const YAML::Node& n, PhantomSpec& p) {
  get(n, "name", p.name);
  get(n, "surface", p.surface);
  get(n, "height", p.height);
  get(n, "dome_radius", p.dome_radius);
  get(n, "half_extent", p.half_extent);
  get(n, "grid_spacing", p.grid_spacing);
  get(n, "intensity_inside", p.intensity_inside);
  get(n, "intensity_outside", p.intensity_outside);
  if (const YAML::Node t = n["tumour"]) {
    if (t["center"]) p.tumour.center = read_vec3(t["center"], "tumour.center");
    if (t["semi_axes"]) p.tumour.semi_axes = read_vec3(t["semi_axes"], "tumour.semi_axes");
  }
}

template <class T>
YAML::Node val(const T& v) {
  if constexpr (std::is_floating_point_v<T>) return YAML::Node(format_double(v));
  else return YAML::Node(v);
}

YAML::Node vec_node(const Vec3& v) {
  YAML::Node n(YAML::NodeType::Sequence);
  n.SetStyle(YAML::EmitterStyle::Flow);
  for (int i = 0; i < 3; ++i) n.push_back(val(v(i)));
  return n;
}

YAML::Node transform_node(const RigidTransform& t) {
  YAML::Node n;
  YAML::Node m(YAML::NodeType::Sequence);
  m.SetStyle(YAML::EmitterStyle::Flow);
  for (double v : t.row_major_3x4()) m.push_back(val(v));
  n["matrix"] = m;
  return n;
}

// Rejects keys that the canonical dump of the defaults does not contain, so
// that typos fail loudly. Sequence items are checked against the first
// reference item; transforms also accept the translation/rpy form.
void check_keys(const YAML::Node& n, const YAML::Node& ref, const std::string& path) {
  if (n.IsMap() && ref.IsMap()) {
    const bool transform = static_cast<bool>(ref["matrix"]);
    for (const auto& kv : n) {
      const auto key = kv.first.as<std::string>();
      if (transform && (key == "translation" || key == "rpy_deg")) continue;
      const YAML::Node sub = ref[key];
      if (!sub) throw Error("config: unknown key '" + path + key + "'");
      check_keys(kv.second, sub, path + key + ".");
    }
  } else if (n.IsSequence() && ref.IsSequence() && ref.size() > 0 && ref[0].IsMap()) {
    for (const auto& item : n) check_keys(item, ref[0], path);
  }
}

}  // namespace

TissuePhantom PhantomSpec::build() const {
  TissuePhantom p;
  const double e = half_extent;
  if (surface == "flat") {
    p.surface = Heightfield::flat(-e, e, -e, e, grid_spacing, height);
  } else if (surface == "dome") {
    const double r = dome_radius;
    if (!(r * r > 2.0 * e * e)) throw Error("phantom '" + name + "': dome radius must exceed the extent diagonal");
    const double apex = height;
    p.surface = Heightfield::from_function(-e, e, -e, e, grid_spacing, [r, apex](double x, double y) {
      return apex - r + std::sqrt(r * r - x * x - y * y);
    });
  } else {
    throw Error("phantom '" + name + "': unknown surface '" + surface + "'");
  }
  p.tumour = tumour;
  p.intensity_inside = intensity_inside;
  p.intensity_outside = intensity_outside;
  p.validate();
  return p;
}

Regime Regime::ideal() { return {}; }

Regime Regime::calibrated() {
  Regime r;
  r.name = "calibrated";
  r.tracker_noise = true;
  r.outlier_rate = 0.05;
  r.detection_probability = 0.95;
  r.marker_sigma_translation = 0.1;
  r.marker_sigma_rotation = 0.2 * kDegree;
  r.speckle = true;
  r.limited_robot = true;
  return r;
}

Vec3 axis_from_name(const std::string& name) {
  if (name == "x" || name == "X") return Vec3::UnitX();
  if (name == "y" || name == "Y") return Vec3::UnitY();
  if (name == "z" || name == "Z") return Vec3::UnitZ();
  throw Error("config: unknown axis '" + name + "' (expected x, y or z)");
}

ExperimentConfig default_config() {
  ExperimentConfig c;
  c.profiles = {
      {"P1", 75.0, 3.0, 0.0, std::numbers::pi / 2.0, "x", 4.0, 300},
      {"P2", 125.0, 3.0, 0.0, std::numbers::pi / 2.0, "y", 6.5, 650},
      {"P3", 125.0, 5.0, 0.0, std::numbers::pi / 2.0, "z", 6.0, 260},
  };
  PhantomSpec flat;
  flat.name = "flat";
  flat.surface = "flat";
  flat.tumour.center = Vec3(0.0, 0.0, -12.0);
  flat.tumour.semi_axes = Vec3(4.0, 6.0, 4.0);
  PhantomSpec dome = flat;
  dome.name = "dome";
  dome.surface = "dome";
  c.phantoms = {flat, dome};
  c.regimes = {Regime::ideal(), Regime::calibrated()};

  c.calib.T_E_M = from_rpy(Vec3(10.0, -5.0, 40.0), Vec3(0.0, 0.0, 30.0));
  c.calib.T_M_D = from_rpy(Vec3(0.0, 20.0, -60.0), Vec3(5.0, 0.0, 0.0));
  c.calib.pixel_spacing = c.image.spacing;
  c.calib.T_D_U = image_to_transducer(c.image.cols, c.image.spacing);
  c.T_C_B = from_rpy(Vec3(200.0, 0.0, 300.0), Vec3(180.0, 0.0, 90.0));
  c.speckle.sigma = 0.3;
  c.speckle.correlation_length = 1.0;
  c.speckle.electronic_sigma = 0.02;
  c.segmentation.smoothing_radius = 2;
  return c;
}

void ExperimentConfig::validate() const {
  if (model_degree < 1) throw Error("config: model_degree must be >= 1");
  if (profiles.empty()) throw Error("config: at least one motion profile is required");
  for (const MotionProfile& p : profiles) {
    if (p.name.empty()) throw Error("config: profile without a name");
    if (!(p.tau > 2.0) || !(p.b >= 0.0)) throw Error("config: profile '" + p.name + "' needs tau > 2 and b >= 0");
    if (!(p.tracker_sigma >= 0.0)) throw Error("config: profile '" + p.name + "' tracker_sigma must be >= 0");
    if (p.learn_frames < 2.0 * p.tau + 1.0) throw Error("config: profile '" + p.name + "' learn_frames must cover 2 * tau + 1 frames");
    axis_from_name(p.axis);
  }
  if (phantoms.empty()) throw Error("config: at least one phantom is required");
  for (const PhantomSpec& p : phantoms) p.build();
  if (regimes.empty()) throw Error("config: at least one regime is required");
  for (const Regime& r : regimes) {
    if (r.outlier_rate < 0.0 || r.outlier_rate >= 0.5) throw Error("config: regime '" + r.name + "' outlier_rate");
    if (r.detection_probability < 0.0 || r.detection_probability > 1.0)
      throw Error("config: regime '" + r.name + "' detection_probability");
  }
  image.validate();
  calib.validate();
  if (std::abs(calib.pixel_spacing - image.spacing) > 1e-12) throw Error("config: pixel spacing mismatch");
  if (e1.trials_per_axis < 1) throw Error("config: trial count must be >= 1");
  for (const auto& a : e1.axes) axis_from_name(a);
  phantom(e2.phantom);
  if (!(e2.cycles > 0.0)) throw Error("config: e2.cycles must be positive");
  for (const auto& p : e3.phantoms) phantom(p);
  if (!(e3.step > 0.0) || !(e3.half_x > 0.0) || !(e3.half_y > 0.0)) throw Error("config: e3 region and step");
  if (!e3.ablation_profile.empty()) profile(e3.ablation_profile);
  if (tracking_nx < 1 || tracking_ny < 1 || !(tracking_half_width >= 0.0)) throw Error("config: tracking grid");
}

const PhantomSpec& ExperimentConfig::phantom(const std::string& name) const {
  for (const PhantomSpec& p : phantoms)
    if (p.name == name) return p;
  throw Error("config: unknown phantom '" + name + "'");
}

const MotionProfile& ExperimentConfig::profile(const std::string& name) const {
  for (const MotionProfile& p : profiles)
    if (p.name == name) return p;
  throw Error("config: unknown profile '" + name + "'");
}

ExperimentConfig parse_config(const std::string& yaml_text) {
  ExperimentConfig c = default_config();
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  if (!root || root.IsNull()) return c;
  if (!root.IsMap()) throw Error("config: top level must be a mapping");
  check_keys(root, YAML::Load(dump_config(c)), "");

  try {
    get(root, "seed", c.seed);
    get(root, "model_degree", c.model_degree);
    get(root, "compensation", c.compensation);
    get(root, "dump_frames", c.dump_frames);

    if (const YAML::Node ps = root["profiles"]) {
      c.profiles.clear();
      for (const YAML::Node& n : ps) {
        MotionProfile p;
        read_profile(n, p);
        c.profiles.push_back(p);
      }
    }
    if (const YAML::Node ps = root["phantoms"]) {
      const PhantomSpec base = c.phantoms.front();
      c.phantoms.clear();
      for (const YAML::Node& n : ps) {
        PhantomSpec p = base;
        read_phantom(n, p);
        c.phantoms.push_back(p);
      }
    }
    if (const YAML::Node rs = root["regimes"]) {
      c.regimes.clear();
      for (const YAML::Node& n : rs) {
        Regime r;
        read_regime(n, r);
        c.regimes.push_back(r);
      }
    }
    if (const YAML::Node n = root["imaging"]) {
      get(n, "rows", c.image.rows);
      get(n, "cols", c.image.cols);
      get(n, "spacing", c.image.spacing);
      get(n, "supersample", c.image.supersample);
    }
    if (const YAML::Node n = root["speckle"]) {
      get(n, "sigma", c.speckle.sigma);
      get(n, "correlation_length", c.speckle.correlation_length);
      get(n, "electronic_sigma", c.speckle.electronic_sigma);
    }
    if (const YAML::Node n = root["calibration"]) {
      if (n["T_E_M"]) c.calib.T_E_M = read_transform(n["T_E_M"], "T_E_M");
      if (n["T_M_D"]) c.calib.T_M_D = read_transform(n["T_M_D"], "T_M_D");
      if (n["T_C_B"]) c.T_C_B = read_transform(n["T_C_B"], "T_C_B");
    }
    c.calib.pixel_spacing = c.image.spacing;
    c.calib.T_D_U = image_to_transducer(c.image.cols, c.image.spacing);
    if (const YAML::Node n = root["robot"]) {
      get(n, "max_linear_speed", c.robot.max_linear_speed);
      get(n, "max_angular_speed", c.robot.max_angular_speed);
      get(n, "latency_ticks", c.robot.latency_ticks);
      get(n, "tick_seconds", c.robot.tick_seconds);
    }
    if (const YAML::Node n = root["servo"]) {
      if (n["mode"]) c.servo.mode = mode_from_name(n["mode"].as<std::string>());
      get(n, "lookahead", c.servo.lookahead);
      get(n, "reach_position", c.servo.reach_position);
      if (n["reach_angle_deg"]) c.servo.reach_angle = n["reach_angle_deg"].as<double>() * kDegree;
      get(n, "online_update", c.servo.online_update);
      get(n, "phase_max_step", c.servo.phase.max_step);
      get(n, "saturation_abort_ticks", c.servo.saturation_abort_ticks);
      get(n, "max_ticks", c.servo.max_ticks);
    }
    if (const YAML::Node n = root["tracking"]) {
      get(n, "half_width", c.tracking_half_width);
      get(n, "nx", c.tracking_nx);
      get(n, "ny", c.tracking_ny);
    }
    if (const YAML::Node n = root["segmentation"]) {
      get(n, "threshold", c.segmentation.threshold);
      get(n, "resample", c.segmentation.resample);
      get(n, "min_area_pixels", c.segmentation.min_area_pixels);
      get(n, "smoothing_radius", c.segmentation.smoothing_radius);
    }
    if (const YAML::Node n = root["e1"]) {
      get(n, "trials_per_axis", c.e1.trials_per_axis);
      if (n["axes"]) c.e1.axes = n["axes"].as<std::vector<std::string>>();
    }
    if (const YAML::Node n = root["e2"]) {
      get(n, "phantom", c.e2.phantom);
      get(n, "cycles", c.e2.cycles);
    }
    if (const YAML::Node n = root["e3"]) {
      if (n["phantoms"]) c.e3.phantoms = n["phantoms"].as<std::vector<std::string>>();
      get(n, "half_x", c.e3.half_x);
      get(n, "half_y", c.e3.half_y);
      get(n, "step", c.e3.step);
      get(n, "contact_offset", c.e3.contact_offset);
      if (n["start_corner"]) c.e3.start = corner_from_name(n["start_corner"].as<std::string>());
      get(n, "ablation_profile", c.e3.ablation_profile);
    }
  } catch (const YAML::Exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("config: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const ExperimentConfig& c) {
  YAML::Emitter out;
  YAML::Node root;
  root["seed"] = val(c.seed);
  root["model_degree"] = val(c.model_degree);
  root["compensation"] = val(c.compensation);
  root["dump_frames"] = val(c.dump_frames);
  for (const MotionProfile& p : c.profiles) {
    YAML::Node n;
    n["name"] = val(p.name);
    n["tau"] = val(p.tau);
    n["b"] = val(p.b);
    n["z0"] = val(p.z0);
    n["phi"] = val(p.phi);
    n["axis"] = val(p.axis);
    n["tracker_sigma"] = val(p.tracker_sigma);
    n["learn_frames"] = val(p.learn_frames);
    root["profiles"].push_back(n);
  }
  for (const PhantomSpec& p : c.phantoms) {
    YAML::Node n;
    n["name"] = val(p.name);
    n["surface"] = val(p.surface);
    n["height"] = val(p.height);
    n["dome_radius"] = val(p.dome_radius);
    n["half_extent"] = val(p.half_extent);
    n["grid_spacing"] = val(p.grid_spacing);
    n["intensity_inside"] = val(p.intensity_inside);
    n["intensity_outside"] = val(p.intensity_outside);
    n["tumour"]["center"] = vec_node(p.tumour.center);
    n["tumour"]["semi_axes"] = vec_node(p.tumour.semi_axes);
    root["phantoms"].push_back(n);
  }
  for (const Regime& r : c.regimes) {
    YAML::Node n;
    n["name"] = val(r.name);
    n["tracker_noise"] = val(r.tracker_noise);
    n["outlier_rate"] = val(r.outlier_rate);
    n["detection_probability"] = val(r.detection_probability);
    n["marker_sigma_mm"] = val(r.marker_sigma_translation);
    n["marker_sigma_deg"] = val(r.marker_sigma_rotation / kDegree);
    n["speckle"] = val(r.speckle);
    n["limited_robot"] = val(r.limited_robot);
    root["regimes"].push_back(n);
  }
  root["imaging"]["rows"] = val(c.image.rows);
  root["imaging"]["cols"] = val(c.image.cols);
  root["imaging"]["spacing"] = val(c.image.spacing);
  root["imaging"]["supersample"] = val(c.image.supersample);
  root["speckle"]["sigma"] = val(c.speckle.sigma);
  root["speckle"]["correlation_length"] = val(c.speckle.correlation_length);
  root["speckle"]["electronic_sigma"] = val(c.speckle.electronic_sigma);
  root["calibration"]["T_E_M"] = transform_node(c.calib.T_E_M);
  root["calibration"]["T_M_D"] = transform_node(c.calib.T_M_D);
  root["calibration"]["T_C_B"] = transform_node(c.T_C_B);
  root["robot"]["max_linear_speed"] = val(c.robot.max_linear_speed);
  root["robot"]["max_angular_speed"] = val(c.robot.max_angular_speed);
  root["robot"]["latency_ticks"] = val(c.robot.latency_ticks);
  root["robot"]["tick_seconds"] = val(c.robot.tick_seconds);
  root["servo"]["mode"] = val(c.servo.mode == CompensationMode::AsPrinted ? "as_printed" : "single");
  root["servo"]["lookahead"] = val(c.servo.lookahead);
  root["servo"]["reach_position"] = val(c.servo.reach_position);
  root["servo"]["reach_angle_deg"] = val(c.servo.reach_angle / kDegree);
  root["servo"]["online_update"] = val(c.servo.online_update);
  root["servo"]["phase_max_step"] = val(c.servo.phase.max_step);
  root["servo"]["saturation_abort_ticks"] = val(c.servo.saturation_abort_ticks);
  root["servo"]["max_ticks"] = val(c.servo.max_ticks);
  root["tracking"]["half_width"] = val(c.tracking_half_width);
  root["tracking"]["nx"] = val(c.tracking_nx);
  root["tracking"]["ny"] = val(c.tracking_ny);
  root["segmentation"]["threshold"] = val(c.segmentation.threshold);
  root["segmentation"]["resample"] = val(c.segmentation.resample);
  root["segmentation"]["min_area_pixels"] = val(c.segmentation.min_area_pixels);
  root["segmentation"]["smoothing_radius"] = val(c.segmentation.smoothing_radius);
  root["e1"]["trials_per_axis"] = val(c.e1.trials_per_axis);
  root["e1"]["axes"] = val(c.e1.axes);
  root["e2"]["phantom"] = val(c.e2.phantom);
  root["e2"]["cycles"] = val(c.e2.cycles);
  root["e3"]["phantoms"] = val(c.e3.phantoms);
  root["e3"]["half_x"] = val(c.e3.half_x);
  root["e3"]["half_y"] = val(c.e3.half_y);
  root["e3"]["step"] = val(c.e3.step);
  root["e3"]["contact_offset"] = val(c.e3.contact_offset);
  root["e3"]["start_corner"] = val(corner_name(c.e3.start));
  root["e3"]["ablation_profile"] = val(c.e3.ablation_profile);
  out << root;
  return std::string(out.c_str()) + "\n";
}

}  // namespace mcscan
