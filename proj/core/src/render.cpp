#include "del/render.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#ifdef DEL_HAVE_PNG
#include <png.h>
#endif

#include "del/autodiff.hpp"
#include "del/common.hpp"

namespace del {
namespace {

/// {t rows, u rows}, both [RF, U, N], for the model's (possibly
/// input-conditioned) receptive field.
std::pair<Tensor, Tensor> unit_rows(const Model& model, const Tensor* input) {
  const ModelConfig& cfg = model.config();
  Tape tape;
  const auto leaf = [&](const char* name) {
    const Tensor* value = model.find(name);
    if (!value) throw ParamError(std::string("model lacks parameter '") + name + "'");
    return tape.constant(*value);
  };

  if (cfg.kind == ModelKind::kLogisticEl) {
    auto [gt, gu] = logistic_el_rows(tape, leaf("el.alpha"), leaf("el.beta"), cfg.channels,
                                     cfg.n, mu_squash(cfg), s_squash(cfg));
    const std::int64_t u = cfg.b * cfg.b;
    return {gt.value().reshaped({cfg.rf_channels, u, cfg.n}),
            gu.value().reshaped({cfg.rf_channels, u, cfg.n})};
  }

  if (cfg.kind == ModelKind::kLogisticElMnn) {
    if (!input)
      throw ParamError("rendering a micro-net receptive field requires an input image");
    if (input->rank() != 3 || input->dim(0) != cfg.channels || input->dim(1) != cfg.n ||
        input->dim(2) != cfg.n)
      throw ParamError("micro-net input must be [" + std::to_string(cfg.channels) + ", " +
                       std::to_string(cfg.n) + ", " + std::to_string(cfg.n) + "], got " +
                       input->shape_str());
    const Var x = tape.constant(input->reshaped({1, cfg.channels, cfg.n, cfg.n}));
    auto [gt, gu] =
        micro_net_rows(tape, leaf("inner.alpha"), leaf("inner.beta"), leaf("mnn.w"),
                       leaf("mnn.b"), leaf("outer.beta"), x, mu_squash(cfg), s_squash(cfg));
    const std::int64_t u = cfg.b * cfg.b;
    return {gt.value().reshaped({cfg.rf_channels, u, cfg.n}),
            gu.value().reshaped({cfg.rf_channels, u, cfg.n})};
  }

  throw ParamError("model '" + model_kind_name(cfg.kind) +
                   "' has no density field to render (logistic-el or logistic-el-mnn only)");
}

void skip_pgm_separators(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (c != EOF && std::isspace(c)) {
      in.get();
    } else {
      return;
    }
  }
}

std::int64_t read_pgm_number(std::istream& in, const std::string& origin) {
  skip_pgm_separators(in);
  std::int64_t value;
  if (!(in >> value) || value < 0)
    throw IoError("malformed PGM header in '" + origin + "'");
  return value;
}

}  // namespace

Tensor receptive_field_image(const Model& model, const Tensor* input) {
  auto [gt, gu] = unit_rows(model, input);
  const std::int64_t rf = gt.dim(0), units = gt.dim(1), n = gt.dim(2);
  Tensor field({n, n});
  for (std::int64_t r = 0; r < rf; ++r) {
    for (std::int64_t q = 0; q < units; ++q) {
      const double* row_u = gu.data() + (r * units + q) * n;
      const double* row_t = gt.data() + (r * units + q) * n;
      for (std::int64_t m = 0; m < n; ++m) {
        double* out = field.data() + m * n;
        const double um = row_u[m];
        for (std::int64_t j = 0; j < n; ++j) out[j] += um * row_t[j];
      }
    }
  }
  return field;
}

std::vector<std::uint8_t> to_gray_bytes(const Tensor& field) {
  double lo = field[0], hi = field[0];
  for (std::int64_t i = 0; i < field.size(); ++i) {
    lo = std::min(lo, field[i]);
    hi = std::max(hi, field[i]);
  }
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(field.size()));
  const double range = hi - lo;
  for (std::int64_t i = 0; i < field.size(); ++i) {
    const double g = range > 0.0 ? (field[i] - lo) / range : 0.0;
    bytes[static_cast<std::size_t>(i)] =
        static_cast<std::uint8_t>(std::lround(255.0 * g));
  }
  return bytes;
}

void write_pgm(const std::filesystem::path& path, const Tensor& field) {
  if (field.rank() != 2) throw ParamError("PGM image must be rank 2, got " + field.shape_str());
  const std::vector<std::uint8_t> bytes = to_gray_bytes(field);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "P5\n" << field.dim(1) << " " << field.dim(0) << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (!in || magic != "P5") throw IoError("'" + path.string() + "' is not a binary P5 PGM");
  const std::int64_t width = read_pgm_number(in, path.string());
  const std::int64_t height = read_pgm_number(in, path.string());
  const std::int64_t maxval = read_pgm_number(in, path.string());
  if (width < 1 || height < 1 || maxval < 1 || maxval > 255)
    throw IoError("unsupported PGM geometry in '" + path.string() + "'");
  in.get();  // single separator byte before the raster
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(width * height));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw IoError("truncated PGM raster in '" + path.string() + "'");
  Tensor img({height, width});
  for (std::int64_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<double>(bytes[static_cast<std::size_t>(i)]);
  return img;
}

bool png_supported() {
#ifdef DEL_HAVE_PNG
  return true;
#else
  return false;
#endif
}

#ifdef DEL_HAVE_PNG
void write_png(const std::filesystem::path& path, const Tensor& field) {
  if (field.rank() != 2) throw ParamError("PNG image must be rank 2, got " + field.shape_str());
  const std::vector<std::uint8_t> bytes = to_gray_bytes(field);
  const std::int64_t height = field.dim(0), width = field.dim(1);

  FILE* fp = std::fopen(path.string().c_str(), "wb");
  if (!fp) throw IoError("cannot open '" + path.string() + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw IoError("libpng failed writing '" + path.string() + "'");
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::int64_t row = 0; row < height; ++row)
    png_write_row(png, const_cast<png_bytep>(bytes.data() + row * width));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}
#else
void write_png(const std::filesystem::path& path, const Tensor&) {
  throw IoError("PNG output requested for '" + path.string() +
                "' but the library was built without libpng");
}
#endif

}  // namespace del
