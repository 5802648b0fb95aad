import platform

import psutil


def get_device_info():
    """Returns a dictionary describing the machine a benchmark ran on."""
    ram = psutil.virtual_memory()
    freq = psutil.cpu_freq()

    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "processor": platform.processor() or platform.machine(),
        "python": platform.python_version(),
        "cores_physical": psutil.cpu_count(logical=False) or 0,
        "cores_logical": psutil.cpu_count(logical=True) or 0,
        "cpu_mhz": freq.max or freq.current if freq else 0.0,
        "ram_total": ram.total / (1024**3),
        "ram_available": ram.available / (1024**3),
        "cpu_percent": psutil.cpu_percent(interval=None),
    }


def device_label():
    """Short name for the device column of a benchmark table."""
    info = get_device_info()
    return f"{info['machine']} x{info['cores_logical']}"


def format_device_info():
    """Returns a formatted string of the device report."""
    info = get_device_info()
    return (
        f"Device report\n"
        f"  Platform: {info['platform']}\n"
        f"  CPU: {info['processor']} ({info['cores_physical']} cores / {info['cores_logical']} threads"
        f", {info['cpu_mhz']:.0f} MHz)\n"
        f"  RAM: {info['ram_available']:.1f}/{info['ram_total']:.1f} GB available\n"
        f"  Python: {info['python']}"
    )
