#pragma once

// Single include point for cpp-httplib so compile-time knobs are consistent
// across every translation unit. The deep backlog matters for the server
// scenario, where hundreds of connections can arrive while earlier streams
// are still draining.

#ifndef CPPHTTPLIB_LISTEN_BACKLOG
#define CPPHTTPLIB_LISTEN_BACKLOG 1024
#endif

#include <httplib.h>
