#pragma once

#include <optional>
#include <string>
#include <vector>

#include "detscore/geometry.hpp"

namespace detscore {

/// One detector output: a box, the detector's confidence and an optional
/// segmentation outline.
struct detection {
    bounding_box box;
    double score = 0.0; ///< confidence in [0,1]
    std::optional<polygon> outline;
};

/// One manually annotated object.
struct ground_truth_object {
    bounding_box box;
    std::optional<polygon> outline;
};

/// One image's metadata, labels (when present) and detector outputs; the unit
/// of all per-image computation. `ground_truth` is absent for unlabeled
/// images, which is distinct from an empty list.
struct image_record {
    std::string id;
    double width = 0.0;
    double height = 0.0;
    std::string group;
    std::optional<std::vector<ground_truth_object>> ground_truth;
    std::vector<detection> detections;

    bool labeled() const { return ground_truth.has_value(); }
};

struct dataset {
    std::vector<image_record> images;
    std::string provenance;
};

} // namespace detscore
