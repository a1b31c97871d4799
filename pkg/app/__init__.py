# Empathy & Emotion Toolkit
# Empathy/distress regression and emotion prediction over reader essays
