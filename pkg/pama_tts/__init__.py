# PAMA-TTS package initialization
