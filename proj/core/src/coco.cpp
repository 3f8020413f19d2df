#include "uwkit/coco.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "uwkit/common.hpp"

namespace uwkit {

namespace {

using nlohmann::json;

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ParseError("malformed JSON in " + path + ": " + e.what());
    }
    return doc;
}

}  // namespace

Dataset load_coco(const std::string& annotation_path, const std::string& image_root) {
    const json doc = load_json_file(annotation_path);
    if (!doc.is_object() || !doc.contains("images") || !doc.contains("annotations") ||
        !doc.contains("categories"))
        throw ParseError(annotation_path + ": expected images/annotations/categories arrays");

    Dataset ds;

    // Dense category remap, ascending original id.
    std::map<int64_t, std::string> cats;
    for (const auto& c : doc.at("categories")) {
        if (!c.contains("id")) throw ParseError("category without id");
        cats[c.at("id").get<int64_t>()] = c.value("name", std::string("category"));
    }
    for (const auto& [orig, name] : cats) {
        ds.category_remap[orig] = static_cast<int>(ds.category_names.size());
        ds.category_names.push_back(name);
    }

    struct ImgRec {
        int64_t id;
        std::string file_name;
        int width = 0, height = 0;
    };
    std::vector<ImgRec> recs;
    for (const auto& im : doc.at("images")) {
        if (!im.contains("id") || !im.contains("file_name"))
            throw ParseError("image entry without id/file_name");
        recs.push_back({im.at("id").get<int64_t>(), im.at("file_name").get<std::string>(),
                        im.value("width", 0), im.value("height", 0)});
    }

    // Annotations grouped by image id.
    std::map<int64_t, std::vector<const json*>> anns_by_image;
    for (const auto& an : doc.at("annotations")) {
        if (!an.contains("image_id") || !an.contains("category_id"))
            throw ParseError("annotation without image_id/category_id");
        anns_by_image[an.at("image_id").get<int64_t>()].push_back(&an);
    }

    for (const auto& rec : recs) {
        const std::filesystem::path img_path = std::filesystem::path(image_root) / rec.file_name;
        AnnotatedImage ai;
        ai.source = DataSource::kCoco;
        ai.id = static_cast<int>(rec.id);
        ai.file_name = rec.file_name;
        try {
            ai.image = read_image(img_path.string());
        } catch (const IoError& e) {
            ds.load_errors.push_back(e.what());
            continue;
        }
        const int h = ai.image.height, w = ai.image.width;

        auto it = anns_by_image.find(rec.id);
        if (it != anns_by_image.end()) {
            for (const json* pan : it->second) {
                const json& an = *pan;
                const int64_t orig_cat = an.at("category_id").get<int64_t>();
                auto cit = ds.category_remap.find(orig_cat);
                if (cit == ds.category_remap.end())
                    throw ParseError("annotation references unknown category id " +
                                     std::to_string(orig_cat));
                Instance inst;
                inst.class_id = cit->second;
                if (an.contains("segmentation")) {
                    const json& seg = an.at("segmentation");
                    if (seg.is_array()) {
                        for (const auto& ring : seg) {
                            PolygonRing pr;
                            for (const auto& v : ring) pr.push_back(v.get<double>());
                            inst.polygons.push_back(std::move(pr));
                        }
                        inst.mask = rasterize_polygons(inst.polygons, h, w);
                    } else if (seg.is_object() && seg.contains("counts") && seg.at("counts").is_array()) {
                        const auto size = seg.at("size");
                        inst.mask = rle_counts_to_mask(seg.at("counts").get<std::vector<int64_t>>(),
                                                       size.at(0).get<int>(), size.at(1).get<int>());
                    } else {
                        throw ParseError("unsupported segmentation encoding");
                    }
                } else {
                    throw ParseError("annotation without segmentation");
                }
                const auto tight = mask_tight_bbox(inst.mask);
                if (an.contains("bbox")) {
                    const auto bb = an.at("bbox");
                    inst.bbox = Box{bb.at(0).get<double>(), bb.at(1).get<double>(),
                                    bb.at(0).get<double>() + bb.at(2).get<double>(),
                                    bb.at(1).get<double>() + bb.at(3).get<double>()};
                } else if (tight) {
                    inst.bbox = *tight;
                } else {
                    continue;  // empty mask, nothing to keep
                }
                ai.instances.push_back(std::move(inst));
            }
        }
        ds.images.push_back(std::move(ai));
    }
    return ds;
}

void save_coco(const std::string& annotation_path, const std::vector<AnnotatedImage>& images,
               const std::vector<std::string>& category_names) {
    json doc;
    doc["images"] = json::array();
    doc["annotations"] = json::array();
    doc["categories"] = json::array();
    for (size_t c = 0; c < category_names.size(); ++c)
        doc["categories"].push_back({{"id", c}, {"name", category_names[c]}});

    int64_t ann_id = 1;
    for (const auto& ai : images) {
        doc["images"].push_back({{"id", ai.id},
                                 {"file_name", ai.file_name},
                                 {"width", ai.image.width},
                                 {"height", ai.image.height}});
        for (const auto& inst : ai.instances) {
            json an;
            an["id"] = ann_id++;
            an["image_id"] = ai.id;
            an["category_id"] = inst.class_id;
            an["iscrowd"] = 0;
            an["area"] = inst.mask.area();
            an["bbox"] = {inst.bbox.x1, inst.bbox.y1, inst.bbox.w(), inst.bbox.h()};
            if (!inst.polygons.empty()) {
                an["segmentation"] = inst.polygons;
            } else {
                an["segmentation"] = {{"size", {inst.mask.height, inst.mask.width}},
                                      {"counts", mask_to_rle_counts(inst.mask)}};
            }
            doc["annotations"].push_back(std::move(an));
        }
    }
    std::ofstream out(annotation_path);
    if (!out) throw IoError("cannot write " + annotation_path);
    out << doc.dump(2) << "\n";
}

std::string detections_to_json(const std::vector<DetectionEntry>& dets) {
    json arr = json::array();
    for (const auto& d : dets) {
        json e;
        e["image_id"] = d.image_id;
        e["category_id"] = d.category_id;
        e["bbox"] = {d.box.x1, d.box.y1, d.box.w(), d.box.h()};
        e["score"] = d.score;
        if (d.mask.height > 0) {
            e["segmentation"] = {{"size", {d.mask.height, d.mask.width}},
                                 {"counts", mask_to_rle_counts(d.mask)}};
        }
        e["iou_score"] = d.iou_score;
        arr.push_back(std::move(e));
    }
    return arr.dump(2);
}

void save_detections(const std::string& path, const std::vector<DetectionEntry>& dets) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << detections_to_json(dets) << "\n";
}

}  // namespace uwkit
