#include "stylebias/ingest.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <set>

namespace stylebias {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> sorted_subdirs(const fs::path& dir) {
    std::vector<std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) out.push_back(e.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

ImageTensor load_image(const fs::path& file, int side) {
    cv::Mat bgr = cv::imread(file.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw IngestError("unreadable image: " + file.string());
    if (side > 0 && (bgr.rows != side || bgr.cols != side)) {
        cv::Mat resized;
        cv::resize(bgr, resized, cv::Size(side, side), 0, 0, cv::INTER_AREA);
        bgr = resized;
    }
    ImageTensor img(3, bgr.rows, bgr.cols);
    for (int y = 0; y < bgr.rows; ++y) {
        const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            img.at(0, y, x) = row[x][2] / 255.f;
            img.at(1, y, x) = row[x][1] / 255.f;
            img.at(2, y, x) = row[x][0] / 255.f;
        }
    }
    return img;
}

void save_image(const ImageTensor& img, const fs::path& file) {
    cv::Mat bgr(img.h, img.w, CV_8UC3);
    for (int y = 0; y < img.h; ++y) {
        cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < img.w; ++x) {
            row[x][2] = cv::saturate_cast<uchar>(img.at(0, y, x) * 255.f);
            row[x][1] = cv::saturate_cast<uchar>(img.at(1, y, x) * 255.f);
            row[x][0] = cv::saturate_cast<uchar>(img.at(2, y, x) * 255.f);
        }
    }
    if (!cv::imwrite(file.string(), bgr))
        throw IngestError("failed to write " + file.string());
}

DatasetGroup ingest_directory(const fs::path& root, int side) {
    if (!fs::is_directory(root)) throw IngestError("not a directory: " + root.string());
    const std::vector<std::string> domain_names = sorted_subdirs(root);
    if (domain_names.size() < 2) throw SchemaError("ingest: need at least 2 domain directories");

    const std::vector<std::string> classes = sorted_subdirs(root / domain_names.front());
    if (classes.empty()) throw SchemaError("ingest: no class directories under " + domain_names.front());

    DatasetGroup group;
    group.name = root.filename().string();
    for (const std::string& dname : domain_names) {
        const std::vector<std::string> dclasses = sorted_subdirs(root / dname);
        if (dclasses != classes)
            throw SchemaError("ingest: class set of domain '" + dname +
                              "' differs from '" + domain_names.front() + "'");
        DomainDataset dom;
        dom.name = dname;
        dom.classes = classes;
        for (std::size_t c = 0; c < classes.size(); ++c) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(root / dname / classes[c]))
                if (e.is_regular_file()) files.push_back(e.path());
            std::sort(files.begin(), files.end());
            for (const fs::path& f : files)
                dom.items.push_back({load_image(f, side), static_cast<int>(c)});
        }
        group.domains.push_back(std::move(dom));
    }
    group.validate();
    return group;
}

void export_group(const DatasetGroup& group, const fs::path& root) {
    for (const DomainDataset& dom : group.domains) {
        std::vector<int> counter(dom.classes.size(), 0);
        for (const DatasetItem& item : dom.items) {
            const fs::path dir = root / dom.name / dom.classes[item.label];
            fs::create_directories(dir);
            char name[32];
            std::snprintf(name, sizeof(name), "%05d.png", counter[item.label]++);
            save_image(item.image, dir / name);
        }
    }
}

}  // namespace stylebias
