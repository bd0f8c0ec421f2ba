#pragma once

#include <string>

#include "symnerf/geometry.hpp"
#include "symnerf/image.hpp"

namespace symnerf {

/// A posed image of one scene.
struct ViewRecord {
  Image image;
  Camera camera;
  std::string scene_id;
  int view_id = 0;
};

/// Rays through every pixel center, row-major.
inline std::vector<Ray> image_rays(const Camera& cam) {
  std::vector<Ray> rays;
  rays.reserve(static_cast<std::size_t>(cam.intrinsics.width) * cam.intrinsics.height);
  for (int y = 0; y < cam.intrinsics.height; ++y)
    for (int x = 0; x < cam.intrinsics.width; ++x)
      rays.push_back(camera_ray(Vec2(x, y), cam.intrinsics, cam.extrinsics));
  return rays;
}

}  // namespace symnerf
