import pytest

from charseg.glyphs import build_template_bank, bundled_font_dir, heldout_font_dir


@pytest.fixture(scope="session")
def bundled_bank():
    bank, report = build_template_bank(bundled_font_dir())
    assert len(report.fonts_used) >= 10
    return bank


@pytest.fixture(scope="session")
def heldout_fonts():
    from charseg.glyphs import list_font_files

    fonts = list_font_files(heldout_font_dir())
    assert len(fonts) >= 2
    return fonts
