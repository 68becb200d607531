#include "collabdistill.h"

#include "cdist/arch.hpp"
#include "cdist/commands.hpp"
#include "cdist/error.hpp"
#include "cdist/image_io.hpp"
#include "cdist/stylize.hpp"

#include <cstring>
#include <new>
#include <string>

struct cd_arch {
  cdist::ArchSpec spec;
};

struct cd_image {
  cdist::Tensor tensor;
};

struct cd_bundle {
  cdist::ModelBundle bundle;
};

namespace {

thread_local std::string g_last_error;

cd_status fail(cd_status s, const char* what) {
  g_last_error = what;
  return s;
}

template <class F>
cd_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return CD_OK;
  } catch (const cdist::DivergenceError& e) {
    return fail(CD_ERR_DIVERGENCE, e.what());
  } catch (const cdist::DataError& e) {
    return fail(CD_ERR_DATA, e.what());
  } catch (const cdist::ConfigError& e) {
    return fail(CD_ERR_CONFIG, e.what());
  } catch (const cdist::SpecError& e) {
    return fail(CD_ERR_SPEC, e.what());
  } catch (const cdist::InfeasibleError& e) {
    return fail(CD_ERR_INFEASIBLE, e.what());
  } catch (const cdist::PreconditionError& e) {
    return fail(CD_ERR_PRECONDITION, e.what());
  } catch (const cdist::DegenerateError& e) {
    return fail(CD_ERR_DEGENERATE, e.what());
  } catch (const cdist::ArgumentError& e) {
    return fail(CD_ERR_ARGUMENT, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(CD_ERR_CONFIG, e.what());
  } catch (const std::bad_alloc&) {
    return fail(CD_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CD_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(CD_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <class T>
void require(const T* p, const char* what) {
  if (p == nullptr) throw cdist::ArgumentError(std::string(what) + " must not be null");
}

}  // namespace

extern "C" {

const char* cd_last_error(void) { return g_last_error.c_str(); }

const char* cd_status_name(cd_status status) {
  switch (status) {
    case CD_OK: return "ok";
    case CD_ERR_ARGUMENT: return "argument";
    case CD_ERR_DEGENERATE: return "degenerate";
    case CD_ERR_SPEC: return "spec";
    case CD_ERR_CONFIG: return "config";
    case CD_ERR_PRECONDITION: return "precondition";
    case CD_ERR_INFEASIBLE: return "infeasible";
    case CD_ERR_DATA: return "data";
    case CD_ERR_DIVERGENCE: return "divergence";
    case CD_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

int cd_exit_code(cd_status status) {
  switch (status) {
    case CD_OK: return 0;
    case CD_ERR_DATA: return 3;
    case CD_ERR_DIVERGENCE: return 4;
    case CD_ERR_INTERNAL: return 70;
    default: return 2;
  }
}

const char* cd_version(void) { return "0.1.0"; }

void cd_string_free(char* s) { std::free(s); }

cd_status cd_arch_preset(const char* name, cd_arch** out) {
  return guarded([&] {
    require(name, "name");
    require(out, "out");
    *out = new cd_arch{cdist::ArchSpec::preset(name)};
  });
}

cd_status cd_arch_from_json(const char* json, cd_arch** out) {
  return guarded([&] {
    require(json, "json");
    require(out, "out");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
      throw cdist::SpecError(std::string("architecture is not valid JSON: ") + e.what());
    }
    *out = new cd_arch{cdist::arch_from_json(j)};
  });
}

cd_status cd_arch_to_json(const cd_arch* arch, char** out) {
  return guarded([&] {
    require(arch, "arch");
    require(out, "out");
    *out = dup_string(cdist::to_json(arch->spec).dump());
  });
}

void cd_arch_free(cd_arch* arch) { delete arch; }

cd_status cd_arch_params(const cd_arch* arch, int include_decoder, int64_t* out) {
  return guarded([&] {
    require(arch, "arch");
    require(out, "out");
    *out = cdist::count_params(arch->spec, include_decoder != 0);
  });
}

cd_status cd_arch_flops(const cd_arch* arch, int height, int width, int include_decoder, int64_t* out) {
  return guarded([&] {
    require(arch, "arch");
    require(out, "out");
    *out = cdist::count_flops(arch->spec, height, width, include_decoder != 0);
  });
}

cd_status cd_arch_peak_memory(const cd_arch* arch, int height, int width, int bytes_per_scalar, int64_t* out) {
  return guarded([&] {
    require(arch, "arch");
    require(out, "out");
    *out = cdist::estimate_peak_activation_memory(arch->spec, height, width, bytes_per_scalar);
  });
}

cd_status cd_arch_probe_max_resolution(const cd_arch* arch, int64_t budget_bytes, int bytes_per_scalar, int* out) {
  return guarded([&] {
    require(arch, "arch");
    require(out, "out");
    *out = cdist::probe_max_resolution(arch->spec, budget_bytes, bytes_per_scalar);
  });
}

cd_status cd_image_load(const char* path, cd_image** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new cd_image{cdist::load_image(path)};
  });
}

cd_status cd_image_create(int height, int width, const double* planar, cd_image** out) {
  return guarded([&] {
    require(planar, "planar");
    require(out, "out");
    if (height < 1 || width < 1) throw cdist::ArgumentError("image sides must be positive");
    cdist::Tensor t(1, 3, height, width);
    std::memcpy(t.data(), planar, t.size() * sizeof(double));
    *out = new cd_image{std::move(t)};
  });
}

cd_status cd_image_save(const cd_image* image, const char* path) {
  return guarded([&] {
    require(image, "image");
    require(path, "path");
    cdist::save_image(image->tensor, path);
  });
}

cd_status cd_image_size(const cd_image* image, int* height, int* width) {
  return guarded([&] {
    require(image, "image");
    if (height) *height = image->tensor.h();
    if (width) *width = image->tensor.w();
  });
}

const double* cd_image_data(const cd_image* image) { return image ? image->tensor.data() : nullptr; }

void cd_image_free(cd_image* image) { delete image; }

cd_status cd_bundle_load(const char* const* checkpoint_dirs, size_t count, int use_student, cd_bundle** out) {
  return guarded([&] {
    require(checkpoint_dirs, "checkpoint_dirs");
    require(out, "out");
    std::vector<std::filesystem::path> dirs;
    for (size_t i = 0; i < count; ++i) {
      require(checkpoint_dirs[i], "checkpoint directory");
      dirs.emplace_back(checkpoint_dirs[i]);
    }
    *out = new cd_bundle{cdist::ModelBundle::from_checkpoints(dirs, use_student != 0)};
  });
}

void cd_bundle_free(cd_bundle* bundle) { delete bundle; }

cd_status cd_stylize_wct(const cd_bundle* bundle, const cd_image* content, const cd_image* style, double alpha,
                         cd_image** out) {
  return guarded([&] {
    require(bundle, "bundle");
    require(content, "content");
    require(style, "style");
    require(out, "out");
    *out = new cd_image{cdist::wct_stylize(bundle->bundle, content->tensor, style->tensor, alpha)};
  });
}

cd_status cd_stylize_adain(const cd_bundle* bundle, const cd_image* content, const cd_image* style, double alpha,
                           cd_image** out) {
  return guarded([&] {
    require(bundle, "bundle");
    require(content, "content");
    require(style, "style");
    require(out, "out");
    *out = new cd_image{cdist::adain_stylize(bundle->bundle, content->tensor, style->tensor, alpha)};
  });
}

cd_status cd_reconstruct(const cd_bundle* bundle, const cd_image* content, cd_image** out) {
  return guarded([&] {
    require(bundle, "bundle");
    require(content, "content");
    require(out, "out");
    *out = new cd_image{cdist::reconstruct(bundle->bundle, content->tensor)};
  });
}

cd_status cd_run_command(const char* command, const cd_run_options* options, char** report_json) {
  return guarded([&] {
    require(command, "command");
    require(options, "options");
    cdist::RunOptions run;
    if (options->config_json != nullptr) {
      try {
        run.config = nlohmann::json::parse(options->config_json);
      } catch (const nlohmann::json::exception& e) {
        throw cdist::ConfigError(std::string("config is not valid JSON: ") + e.what());
      }
    }
    if (options->base_dir != nullptr) run.base_dir = options->base_dir;
    if (options->out_dir != nullptr) run.out_dir = options->out_dir;
    if (options->has_seed) run.seed = options->seed;
    run.deterministic = options->deterministic != 0;
    const nlohmann::json report = cdist::run_command(command, run);
    if (report_json != nullptr) *report_json = dup_string(report.dump(2));
  });
}

}  // extern "C"
