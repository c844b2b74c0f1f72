import logging
from flask import Flask
from flask_cors import CORS
from werkzeug.middleware.proxy_fix import ProxyFix

from config import Settings

settings = Settings.from_env()

# Set up logging
logging.basicConfig(level=settings.log_level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')
logger = logging.getLogger(__name__)


def create_app() -> Flask:
    app = Flask(__name__)
    app.secret_key = settings.session_secret
    app.wsgi_app = ProxyFix(app.wsgi_app, x_proto=1, x_host=1)

    # Enable CORS for API calls
    CORS(app)
    app.json.sort_keys = False

    from routes.api import api_bp
    app.register_blueprint(api_bp, url_prefix='/api')

    @app.errorhandler(404)
    def not_found(error):
        return {'error': 'Endpoint not found', 'status_code': 404}, 404

    @app.errorhandler(500)
    def internal_error(error):
        logger.error(f"Internal server error: {error}")
        return {'error': 'Internal server error', 'status_code': 500}, 500

    return app


app = create_app()

if __name__ == '__main__':
    app.run(host='0.0.0.0', port=settings.port)
