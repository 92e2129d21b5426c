#include "agent_unlearn/agent_unlearn.h"

#include <cstring>
#include <new>
#include <optional>
#include <string>

#include "agent_unlearn/error.hpp"
#include "agent_unlearn/experiment.hpp"
#include "agent_unlearn/grid_io.hpp"
#include "agent_unlearn/memory.hpp"

struct au_experiment {
  au::experiment::ExperimentConfig config;
  std::optional<au::experiment::ExperimentResult> last;
};

struct au_grid {
  au::env::GridSpec spec;
};

struct au_memory {
  au::agent::MemoryStore store;
};

namespace {

thread_local std::string last_error;

au_status fail_with(au_status code, const std::string& what) {
  last_error = what;
  return code;
}

// Runs f and maps whatever it throws onto a status.
template <class F>
au_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return AU_OK;
  } catch (const au::Error& e) {
    return fail_with(static_cast<au_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return fail_with(AU_ERR_CAPACITY, "out of memory");
  } catch (const std::exception& e) {
    return fail_with(AU_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail_with(AU_ERR_INTERNAL, "unknown failure");
  }
}

char* copy_out(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

#define AU_REQUIRE(cond, what) \
  if (!(cond)) return fail_with(AU_ERR_INVALID_ARGUMENT, what)

}  // namespace

extern "C" {

const char* au_version(void) { return "0.1.0"; }

const char* au_last_error(void) { return last_error.c_str(); }

void au_string_free(char* s) { delete[] s; }

au_status au_experiment_load(const char* config_path, au_experiment** out) {
  AU_REQUIRE(config_path && out, "null argument");
  *out = nullptr;
  return guarded([&] { *out = new au_experiment{au::experiment::load_config(config_path), {}}; });
}

au_status au_experiment_from_json(const char* config_json, au_experiment** out) {
  AU_REQUIRE(config_json && out, "null argument");
  *out = nullptr;
  return guarded([&] {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(config_json);
    } catch (const nlohmann::json::parse_error& e) {
      au::fail(au::ErrorCode::kParse, e.what());
    }
    *out = new au_experiment{au::experiment::ExperimentConfig::from_json(doc), {}};
  });
}

void au_experiment_free(au_experiment* e) { delete e; }

au_status au_experiment_set_seed(au_experiment* e, uint64_t seed) {
  AU_REQUIRE(e, "null experiment");
  e->config.seed = seed;
  return AU_OK;
}

au_status au_experiment_set_jobs(au_experiment* e, size_t jobs) {
  AU_REQUIRE(e, "null experiment");
  e->config.jobs = jobs;
  return AU_OK;
}

au_status au_experiment_set_allow_network(au_experiment* e, int allow) {
  AU_REQUIRE(e, "null experiment");
  e->config.allow_network = allow != 0;
  return AU_OK;
}

au_status au_experiment_set_output_dir(au_experiment* e, const char* dir) {
  AU_REQUIRE(e && dir, "null argument");
  e->config.output_dir = dir;
  return AU_OK;
}

au_status au_experiment_config_json(const au_experiment* e, char** out) {
  AU_REQUIRE(e && out, "null argument");
  return guarded([&] { *out = copy_out(e->config.to_json().dump(2)); });
}

au_status au_experiment_run(au_experiment* e, au_mode mode, int* checks_passed) {
  AU_REQUIRE(e, "null experiment");
  AU_REQUIRE(mode == AU_MODE_RUN || mode == AU_MODE_CERTIFY || mode == AU_MODE_ATTACK, "unknown mode");
  const auto m = mode == AU_MODE_RUN       ? au::experiment::Mode::kRun
                 : mode == AU_MODE_CERTIFY ? au::experiment::Mode::kCertify
                                           : au::experiment::Mode::kAttack;
  return guarded([&] {
    e->last.reset();
    e->last = au::experiment::run_experiment(e->config, m);
    au::experiment::write_outputs(*e->last, e->config, m);
    if (checks_passed) *checks_passed = e->last->passed() ? 1 : 0;
  });
}

au_status au_experiment_summary_json(const au_experiment* e, char** out) {
  AU_REQUIRE(e && out, "null argument");
  if (!e->last) return fail_with(AU_ERR_INVALID_ARGUMENT, "the experiment has not run");
  return guarded([&] { *out = copy_out(e->last->summary().dump(2)); });
}

au_status au_grid_generate(uint64_t seed, int width, int height, int obstacles, int treasures,
                           const char* env_id, au_grid** out) {
  AU_REQUIRE(out, "null argument");
  *out = nullptr;
  return guarded([&] {
    *out = new au_grid{au::env::generate(seed, width, height, obstacles, treasures, env_id ? env_id : "")};
  });
}

au_status au_grid_parse(const char* text, au_grid_format format, const char* env_id, au_grid** out) {
  AU_REQUIRE(text && out, "null argument");
  *out = nullptr;
  return guarded([&] {
    if (format == AU_GRID_JSON) {
      *out = new au_grid{au::env::from_json_text(text)};
    } else {
      *out = new au_grid{au::env::from_text(text, env_id ? env_id : "grid")};
    }
  });
}

void au_grid_free(au_grid* g) { delete g; }

au_status au_grid_render(const au_grid* g, au_grid_format format, char** out) {
  AU_REQUIRE(g && out, "null argument");
  return guarded([&] {
    *out = copy_out(format == AU_GRID_JSON ? au::env::to_json_text(g->spec) : au::env::to_text(g->spec));
  });
}

au_status au_grid_size(const au_grid* g, int* width, int* height) {
  AU_REQUIRE(g && width && height, "null argument");
  *width = g->spec.width();
  *height = g->spec.height();
  return AU_OK;
}

au_status au_memory_load(const char* path, au_memory** out) {
  AU_REQUIRE(path && out, "null argument");
  *out = nullptr;
  return guarded([&] { *out = new au_memory{au::agent::MemoryStore::load(path)}; });
}

au_status au_memory_save(const au_memory* m, const char* path) {
  AU_REQUIRE(m && path, "null argument");
  return guarded([&] {
    au::agent::MemoryStore copy = m->store;
    copy.set_file_path(path);
    copy.save();
  });
}

au_status au_memory_size(const au_memory* m, size_t* entries) {
  AU_REQUIRE(m && entries, "null argument");
  *entries = m->store.size();
  return AU_OK;
}

void au_memory_free(au_memory* m) { delete m; }

}  // extern "C"
