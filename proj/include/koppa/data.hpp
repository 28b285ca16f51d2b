#ifndef KOPPA_DATA_HPP
#define KOPPA_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "koppa/matrix.hpp"

namespace koppa {

// One task's data. Labels are global class ids: class c of task t maps to
// t * classes_per_task + c, so head blocks line up with contiguous ranges.
struct TaskDataset {
    Matrix train_x;              // n_train x d_in
    std::vector<int> train_y;
    Matrix test_x;               // n_test x d_in
    std::vector<int> test_y;
    int class_begin = 0;
    int class_count = 0;
};

// Seeded class-incremental Gaussian blobs: every class gets a mean drawn
// uniformly on the sphere of radius `separation` and unit covariance, with a
// stratified 80/20 train/test split.
std::vector<TaskDataset> synth_split_gaussians(std::size_t tasks, std::size_t classes_per_task,
                                               std::size_t dim, std::size_t samples_per_class,
                                               double separation, std::uint64_t seed);

// CSV with a header row, float feature columns and a final integer label
// column. Distinct labels are shuffled by seed, partitioned into contiguous
// task ranges and split 80/20 per class. Malformed rows raise ParseError
// naming the line.
std::vector<TaskDataset> load_csv_tasks(const std::string& path, std::size_t tasks,
                                        std::size_t classes_per_task, std::uint64_t seed);

// Raw binary alternative: 16-byte header (magic "KPDS", u32 n, u32 d,
// u32 n_classes, little-endian), then n*d little-endian f32 features
// row-major, then n u32 labels.
std::vector<TaskDataset> load_kpds_tasks(const std::string& path, std::size_t tasks,
                                         std::size_t classes_per_task, std::uint64_t seed);

void write_kpds(const std::string& path, const Matrix& features,
                const std::vector<int>& labels, std::uint32_t n_classes);

} // namespace koppa

#endif
