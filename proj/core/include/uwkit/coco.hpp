#pragma once

#include <map>
#include <string>
#include <vector>

#include "uwkit/synth.hpp"

namespace uwkit {

// In-memory dataset: images plus the dense category index space.
struct Dataset {
    std::vector<AnnotatedImage> images;
    std::vector<std::string> category_names;           // dense index -> name
    std::map<int64_t, int> category_remap;             // original COCO id -> dense index
    std::vector<std::string> load_errors;              // per-item failures (non-fatal)

    int num_classes() const { return static_cast<int>(category_names.size()); }
};

// Reads a COCO-style instance annotation document. Polygon segmentations are
// rasterized to binary masks; uncompressed RLE objects are accepted too.
// Missing bboxes are recomputed from the mask. Category ids are remapped to
// a dense [0, C) index (ascending original id). A missing or unreadable
// image file is recorded in load_errors and the item skipped; a malformed
// document throws ParseError.
Dataset load_coco(const std::string& annotation_path, const std::string& image_root);

// Writes images' annotations as a COCO-style document (images/annotations/
// categories). Polygons are serialized when an instance carries them,
// otherwise the mask is stored as uncompressed RLE. Does not write pixels.
void save_coco(const std::string& annotation_path, const std::vector<AnnotatedImage>& images,
               const std::vector<std::string>& category_names);

// One detection in COCO results form.
struct DetectionEntry {
    int image_id = 0;
    int category_id = 0;  // dense index
    Box box;
    double score = 0.0;
    Mask mask;            // may be empty for box-only results
    double iou_score = 0.0;
};

// COCO results array serialization (bbox + uncompressed RLE segmentation).
std::string detections_to_json(const std::vector<DetectionEntry>& dets);
void save_detections(const std::string& path, const std::vector<DetectionEntry>& dets);

}  // namespace uwkit
