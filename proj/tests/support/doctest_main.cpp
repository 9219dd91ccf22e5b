#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstring>
#include <string>

std::string g_fixture_dir;  // set by --fixture-dir=... or MDE_FIXTURE_DIR

int main(int argc, char** argv) {
    if (const char* env = std::getenv("MDE_FIXTURE_DIR"))
        g_fixture_dir = env;
    for (int i = 1; i < argc; ++i) {
        if (std::strncmp(argv[i], "--fixture-dir=", 14) == 0)
            g_fixture_dir = argv[i] + 14;
    }
    doctest::Context ctx;
    ctx.applyCommandLine(argc, argv);
    return ctx.run();
}
