// Copyright (C) 2026 NerfBooth Authors
// SPDX-License-Identifier: Apache-2.0

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <sstream>

#include "nerfbooth/geometry.hpp"

namespace nerfbooth {

using nlohmann::json;

void save_obj(const std::string& path, const PartMesh& mesh) {
  std::ofstream f(path);
  if (!f) throw IoError("obj: cannot write " + path);
  f << std::setprecision(17);
  f << "# " << mesh.label << "\n";
  for (const auto& v : mesh.vertices) f << "v " << v.x << " " << v.y << " " << v.z << "\n";
  for (const auto& t : mesh.triangles) f << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
  if (!f) throw IoError("obj: write failed " + path);
}

PartMesh load_obj(const std::string& path, const std::string& label) {
  std::ifstream f(path);
  if (!f) throw IoError("obj: cannot open " + path);
  PartMesh m;
  m.label = label;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3d v;
      ss >> v.x >> v.y >> v.z;
      if (!ss) throw IoError("obj: malformed vertex in " + path);
      m.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<int, 3> idx{};
      for (int k = 0; k < 3; ++k) {
        std::string tok;
        ss >> tok;
        if (tok.empty()) throw IoError("obj: malformed face in " + path);
        idx[k] = std::stoi(tok.substr(0, tok.find('/'))) - 1;
      }
      m.triangles.push_back(idx);
    }
  }
  m.validate();
  return m;
}

void save_skeleton_json(const std::string& path, const ArticulatedSkeleton& skel) {
  json j;
  j["joints"] = json::array();
  for (const auto& joint : skel.joints)
    j["joints"].push_back({{"name", joint.name}, {"position", {joint.position.x, joint.position.y, joint.position.z}}});
  j["bones"] = json::array();
  for (const auto& b : skel.bones)
    j["bones"].push_back({{"parent", skel.joints[std::size_t(b.parent)].name},
                          {"child", skel.joints[std::size_t(b.child)].name},
                          {"color", {b.color.x, b.color.y, b.color.z}}});
  std::ofstream f(path);
  if (!f) throw IoError("skeleton: cannot write " + path);
  f << j.dump(2) << "\n";
}

ArticulatedSkeleton load_skeleton_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("skeleton: cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw IoError("skeleton: bad JSON in " + path + ": " + e.what());
  }
  ArticulatedSkeleton s;
  try {
    for (const auto& joint : j.at("joints"))
      s.joints.push_back(
          {joint.at("name").get<std::string>(),
           {joint.at("position").at(0).get<double>(), joint.at("position").at(1).get<double>(),
            joint.at("position").at(2).get<double>()}});
    for (const auto& b : j.at("bones")) {
      SkeletonBone bone;
      bone.parent = s.index_of(b.at("parent").get<std::string>());
      bone.child = s.index_of(b.at("child").get<std::string>());
      auto c = b.at("color");
      bone.color = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
      s.bones.push_back(bone);
    }
  } catch (const json::exception& e) {
    throw IoError("skeleton: schema violation in " + path + ": " + e.what());
  }
  s.validate();
  return s;
}

void save_pose2d_json(const std::string& path, const Pose2d& pose) {
  json joints = json::object();
  for (const auto& [name, p] : pose) joints[name] = {p.x, p.y};
  json j;
  j["joints"] = joints;
  std::ofstream f(path);
  if (!f) throw IoError("pose: cannot write " + path);
  f << j.dump(2) << "\n";
}

Pose2d load_pose2d_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("pose: cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw IoError("pose: bad JSON in " + path + ": " + e.what());
  }
  if (!j.contains("joints") || !j["joints"].is_object()) throw IoError("pose: missing joints object in " + path);
  Pose2d pose;
  for (auto it = j["joints"].begin(); it != j["joints"].end(); ++it) {
    const auto& arr = it.value();
    if (!arr.is_array() || arr.size() != 2) throw IoError("pose: joint '" + it.key() + "' must be [u, v] in " + path);
    double u = arr.at(0).get<double>(), v = arr.at(1).get<double>();
    if (!(u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0))
      throw IoError("pose: joint '" + it.key() + "' outside [0,1]^2 in " + path);
    pose.push_back({it.key(), {u, v, 0.0}});
  }
  if (pose.empty()) throw IoError("pose: no joints in " + path);
  return pose;
}

}  // namespace nerfbooth
