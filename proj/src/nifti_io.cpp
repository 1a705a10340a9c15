#include "bundleseg/nifti_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include "json.hpp"

#include "bundleseg/error.hpp"

namespace bundleseg {
namespace {

#pragma pack(push, 1)
struct Nifti1Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1;
  float intent_p2;
  float intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max;
  float cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax;
  std::int32_t glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b;
  float quatern_c;
  float quatern_d;
  float qoffset_x;
  float qoffset_y;
  float qoffset_z;
  float srow_x[4];
  float srow_y[4];
  float srow_z[4];
  char intent_name[16];
  char magic[4];
};
#pragma pack(pop)
static_assert(sizeof(Nifti1Header) == 348);

constexpr std::int16_t kUInt8 = 2;
constexpr std::int16_t kInt16 = 4;
constexpr std::int16_t kInt32 = 8;
constexpr std::int16_t kFloat32 = 16;
constexpr std::int16_t kFloat64 = 64;
constexpr std::int16_t kInt8 = 256;
constexpr std::int16_t kUInt16 = 512;
constexpr std::int16_t kUInt32 = 768;

struct GzCloser {
  void operator()(gzFile_s* f) const {
    if (f) gzclose(f);
  }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

void read_exact(gzFile f, void* dst, std::size_t bytes, const std::filesystem::path& path) {
  auto* out = static_cast<char*>(dst);
  while (bytes > 0) {
    const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(bytes, 1u << 30));
    const int got = gzread(f, out, chunk);
    if (got <= 0) {
      throw Error(ErrorKind::format, "truncated NIfTI file " + path.string());
    }
    out += got;
    bytes -= static_cast<std::size_t>(got);
  }
}

template <typename T>
void convert(const std::vector<char>& raw, std::vector<float>& out, float slope, float inter) {
  const std::size_t n = raw.size() / sizeof(T);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, raw.data() + i * sizeof(T), sizeof(T));
    out[i] = static_cast<float>(static_cast<double>(v) * slope + inter);
  }
}

bool ends_with_gz(const std::filesystem::path& p) { return p.extension() == ".gz"; }

}  // namespace

Image4D read_nifti(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorKind::io, "no such file: " + path.string());
  }
  GzHandle f(gzopen(path.c_str(), "rb"));
  if (!f) throw Error(ErrorKind::io, "cannot open " + path.string());

  Nifti1Header hdr{};
  read_exact(f.get(), &hdr, sizeof(hdr), path);
  if (hdr.sizeof_hdr != 348) {
    throw Error(ErrorKind::format, path.string() + ": not a little-endian NIfTI-1 header");
  }
  if (std::memcmp(hdr.magic, "n+1\0", 4) != 0) {
    throw Error(ErrorKind::format, path.string() + ": missing n+1 magic (only single-file NIfTI-1)");
  }
  const int ndim = hdr.dim[0];
  if (ndim < 1 || ndim > 7) {
    throw Error(ErrorKind::format, path.string() + ": invalid dim[0]=" + std::to_string(ndim));
  }
  Index3 shape{1, 1, 1};
  int frames = 1;
  for (int d = 1; d <= ndim; ++d) {
    if (hdr.dim[d] < 1) {
      throw Error(ErrorKind::format, path.string() + ": non-positive dim[" + std::to_string(d) + "]");
    }
    if (d <= 3) {
      shape[d - 1] = hdr.dim[d];
    } else {
      frames *= hdr.dim[d];
    }
  }
  Vec3 voxel{1.0, 1.0, 1.0};
  for (int a = 0; a < 3; ++a) {
    voxel[a] = a < ndim ? static_cast<double>(hdr.pixdim[a + 1]) : 1.0;
    if (!(voxel[a] > 0.0)) {
      throw Error(ErrorKind::format, path.string() + ": non-positive voxel size along axis " +
                                         std::to_string(a));
    }
  }
  Vec3 origin{0.0, 0.0, 0.0};
  if (hdr.sform_code > 0) {
    origin = {hdr.srow_x[3], hdr.srow_y[3], hdr.srow_z[3]};
  } else if (hdr.qform_code > 0) {
    origin = {hdr.qoffset_x, hdr.qoffset_y, hdr.qoffset_z};
  }

  Image4D img;
  img.grid = VoxelGrid(shape, voxel, origin);
  img.frames = frames;

  const auto offset = static_cast<long>(hdr.vox_offset);
  if (offset < 348) throw Error(ErrorKind::format, path.string() + ": vox_offset < 348");
  if (offset > 348) {
    std::vector<char> skip(static_cast<std::size_t>(offset - 348));
    read_exact(f.get(), skip.data(), skip.size(), path);
  }

  std::size_t elem = 0;
  switch (hdr.datatype) {
    case kUInt8:
    case kInt8: elem = 1; break;
    case kInt16:
    case kUInt16: elem = 2; break;
    case kInt32:
    case kUInt32:
    case kFloat32: elem = 4; break;
    case kFloat64: elem = 8; break;
    default:
      throw Error(ErrorKind::format,
                  path.string() + ": unsupported datatype " + std::to_string(hdr.datatype));
  }
  const std::size_t count = img.grid.voxel_count() * static_cast<std::size_t>(frames);
  std::vector<char> raw(count * elem);
  read_exact(f.get(), raw.data(), raw.size(), path);

  float slope = hdr.scl_slope;
  float inter = hdr.scl_inter;
  if (slope == 0.0f || !std::isfinite(slope)) {
    slope = 1.0f;
    inter = 0.0f;
  }
  switch (hdr.datatype) {
    case kUInt8: convert<std::uint8_t>(raw, img.data, slope, inter); break;
    case kInt8: convert<std::int8_t>(raw, img.data, slope, inter); break;
    case kInt16: convert<std::int16_t>(raw, img.data, slope, inter); break;
    case kUInt16: convert<std::uint16_t>(raw, img.data, slope, inter); break;
    case kInt32: convert<std::int32_t>(raw, img.data, slope, inter); break;
    case kUInt32: convert<std::uint32_t>(raw, img.data, slope, inter); break;
    case kFloat32:
      if (slope == 1.0f && inter == 0.0f) {
        img.data.resize(count);
        std::memcpy(img.data.data(), raw.data(), raw.size());
      } else {
        convert<float>(raw, img.data, slope, inter);
      }
      break;
    case kFloat64: convert<double>(raw, img.data, slope, inter); break;
    default: break;
  }
  return img;
}

void write_nifti(const Image4D& image, const std::filesystem::path& path, StorageType storage) {
  image.grid.validate();
  if (image.frames < 1 || image.data.size() != image.grid.voxel_count() * image.frames) {
    throw Error(ErrorKind::invalid_argument, "refusing to write an empty or inconsistent image");
  }
  Nifti1Header hdr{};
  hdr.sizeof_hdr = 348;
  hdr.regular = 'r';
  hdr.dim[0] = image.frames > 1 ? 4 : 3;
  for (int a = 0; a < 3; ++a) hdr.dim[a + 1] = static_cast<std::int16_t>(image.grid.shape[a]);
  hdr.dim[4] = static_cast<std::int16_t>(image.frames);
  for (int d = 5; d < 8; ++d) hdr.dim[d] = 1;
  hdr.pixdim[0] = 1.0f;
  for (int a = 0; a < 3; ++a) hdr.pixdim[a + 1] = static_cast<float>(image.grid.voxel_size[a]);
  hdr.pixdim[4] = 1.0f;
  hdr.vox_offset = 352.0f;
  hdr.scl_slope = 1.0f;
  hdr.xyzt_units = 2;  // mm
  if (storage == StorageType::uint8) {
    hdr.datatype = kUInt8;
    hdr.bitpix = 8;
  } else {
    hdr.datatype = kFloat32;
    hdr.bitpix = 32;
  }
  hdr.qform_code = 1;
  hdr.sform_code = 1;
  hdr.qoffset_x = static_cast<float>(image.grid.origin[0]);
  hdr.qoffset_y = static_cast<float>(image.grid.origin[1]);
  hdr.qoffset_z = static_cast<float>(image.grid.origin[2]);
  hdr.srow_x[0] = static_cast<float>(image.grid.voxel_size[0]);
  hdr.srow_y[1] = static_cast<float>(image.grid.voxel_size[1]);
  hdr.srow_z[2] = static_cast<float>(image.grid.voxel_size[2]);
  hdr.srow_x[3] = hdr.qoffset_x;
  hdr.srow_y[3] = hdr.qoffset_y;
  hdr.srow_z[3] = hdr.qoffset_z;
  std::memcpy(hdr.magic, "n+1\0", 4);

  std::vector<char> payload;
  if (storage == StorageType::uint8) {
    payload.resize(image.data.size());
    for (std::size_t i = 0; i < image.data.size(); ++i) {
      const float v = image.data[i];
      payload[i] = static_cast<char>(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 255.0f))));
    }
  } else {
    payload.resize(image.data.size() * sizeof(float));
    std::memcpy(payload.data(), image.data.data(), payload.size());
  }
  const char extension[4] = {0, 0, 0, 0};

  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  if (ends_with_gz(path)) {
    GzHandle f(gzopen(path.c_str(), "wb6"));
    if (!f) throw Error(ErrorKind::io, "cannot write " + path.string());
    bool ok = gzwrite(f.get(), &hdr, sizeof(hdr)) == static_cast<int>(sizeof(hdr)) &&
              gzwrite(f.get(), extension, 4) == 4;
    std::size_t done = 0;
    while (ok && done < payload.size()) {
      const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(payload.size() - done, 1u << 30));
      ok = gzwrite(f.get(), payload.data() + done, chunk) == static_cast<int>(chunk);
      done += chunk;
    }
    if (!ok) throw Error(ErrorKind::io, "write failed for " + path.string());
  } else {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(&hdr), sizeof(hdr));
    out.write(extension, 4);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
  }
}

std::filesystem::path labels_sidecar_path(const std::filesystem::path& image_path) {
  auto stem = image_path.filename().string();
  for (const std::string ext : {".nii.gz", ".nii"}) {
    if (stem.size() > ext.size() && stem.compare(stem.size() - ext.size(), ext.size(), ext) == 0) {
      stem.resize(stem.size() - ext.size());
      break;
    }
  }
  return image_path.parent_path() / (stem + ".labels.json");
}

ScalarVolume load_scalar(const std::filesystem::path& path) {
  return scalar_from_image(read_nifti(path));
}

PeakVolume load_peaks(const std::filesystem::path& path) {
  return peaks_from_image(read_nifti(path));
}

BundleMaskSet load_masks(const std::filesystem::path& path, int expected_channels) {
  Image4D img = read_nifti(path);
  if (expected_channels > 0 && img.frames != expected_channels) {
    throw Error(ErrorKind::shape_mismatch, path.string() + ": expected " +
                                               std::to_string(expected_channels) +
                                               " bundle channels, found " +
                                               std::to_string(img.frames));
  }
  std::vector<std::string> names;
  std::vector<char> valid;
  const auto sidecar = labels_sidecar_path(path);
  if (std::filesystem::exists(sidecar)) {
    std::ifstream in(sidecar);
    nlohmann::json doc;
    try {
      in >> doc;
      names = doc.at("channels").get<std::vector<std::string>>();
      if (doc.contains("valid")) {
        for (bool b : doc.at("valid").get<std::vector<bool>>()) valid.push_back(b ? 1 : 0);
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::format, sidecar.string() + ": " + e.what());
    }
    if (!valid.empty() && valid.size() != names.size()) {
      throw Error(ErrorKind::format, sidecar.string() + ": 'valid' length differs from 'channels'");
    }
  } else {
    for (int c = 0; c < img.frames; ++c) names.push_back(std::to_string(c));
  }
  return masks_from_image(std::move(img), std::move(names), std::move(valid));
}

void save_volume(const ScalarVolume& v, const std::filesystem::path& path) {
  write_nifti(to_image(v), path, StorageType::float32);
}

void save_volume(const PeakVolume& v, const std::filesystem::path& path) {
  write_nifti(to_image(v), path, StorageType::float32);
}

void save_volume(const BundleMaskSet& v, const std::filesystem::path& path) {
  v.grid.validate();
  if (v.channels.empty()) {
    throw Error(ErrorKind::invalid_argument, "refusing to write a mask set with no channels");
  }
  v.validate();
  write_nifti(to_image(v), path, v.is_binary() ? StorageType::uint8 : StorageType::float32);
  nlohmann::json doc;
  doc["channels"] = v.channels;
  std::vector<bool> valid;
  for (char b : v.valid) valid.push_back(b != 0);
  doc["valid"] = valid;
  std::ofstream out(labels_sidecar_path(path));
  if (!out) throw Error(ErrorKind::io, "cannot write labels sidecar for " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace bundleseg
